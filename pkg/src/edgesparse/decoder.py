"""Deep decoder assembly, per-image fitting and ensemble pixel embeddings."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoding import blur_sigma, make_decoder_input, make_fit_target, make_positional_encoding
from .errors import InvalidParameterError, InvalidShapeError, NumericFailureError
from .imaging import as_rgb

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecoderConfig:
    k: int = 128
    blocks: int = 5
    l: int = 1
    lam: float = 0.1
    blur_factor: float = 0.0001
    dropout_p: float = 0.3
    lr: float = 0.01
    steps: int = 1500
    lr_decay_step: int = 1000
    lr_decay_factor: float = 0.8
    nd: int = 3
    seed: int = 0
    # overrides the blur-factor formula when set (diagnostic sweeps)
    sigma: float | None = None

    def __post_init__(self):
        if not self.steps >= self.lr_decay_step >= 0:
            raise InvalidParameterError(
                f"need steps >= lr_decay_step >= 0, got {self.steps} and {self.lr_decay_step}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lam must be in [0, 1], got {self.lam}")
        if self.nd < 1 or self.blocks < 1 or self.k < 1 or self.l < 1:
            raise InvalidParameterError("nd, blocks, k and l must all be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidParameterError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if not self.blur_factor > 0 or (self.sigma is not None and not self.sigma > 0):
            raise InvalidParameterError("blur factor and sigma must be positive")

    def replace(self, **changes) -> "DecoderConfig":
        return dataclasses.replace(self, **changes)

    def with_steps(self, steps: int) -> "DecoderConfig":
        """Shorter/longer schedule keeping the decay point at the same fraction."""
        decay = round(steps * self.lr_decay_step / self.steps) if self.steps else 0
        return self.replace(steps=steps, lr_decay_step=decay)

    def input_sigma(self, w: int, h: int) -> float:
        return self.sigma if self.sigma is not None else blur_sigma(self.blur_factor, w, h)


PRESETS = {
    "natural": DecoderConfig(),
    "downsized": DecoderConfig(k=32, blocks=4, nd=5, blur_factor=0.0002),
}


def preset(name: str, **overrides) -> DecoderConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**overrides)


def stage_sizes(w: int, h: int, blocks: int) -> list[tuple[int, int]]:
    """Spatial sizes from the network input (index 0) to the output (index ``blocks``)."""
    if blocks < 1:
        raise InvalidParameterError("need at least one block")
    sizes = [(w, h)]
    for _ in range(blocks):
        pw, ph = sizes[-1]
        sizes.append((-(-pw // 2), -(-ph // 2)))
    sizes.reverse()
    if min(min(s) for s in sizes) < 2:
        raise InvalidShapeError(
            f"{w}x{h} is too small for {blocks} blocks (stages {sizes}); use fewer blocks")
    return sizes


DecoderParams = dict  # name -> Tensor


def init_params(k: int, blocks: int, out_channels: int, rng: np.random.Generator) -> DecoderParams:
    params: DecoderParams = {}
    for i in range(blocks):
        params[f"mix{i}"] = T.Tensor(rng.normal(0.0, 1.0 / math.sqrt(k), size=(k, k)), True)
        params[f"gamma{i}"] = T.Tensor(np.ones(k), True)
        params[f"beta{i}"] = T.Tensor(np.zeros(k), True)
    params["head"] = T.Tensor(rng.normal(0.0, 1.0 / math.sqrt(k), size=(out_channels, k)), True)
    return params


@dataclass
class ForwardResult:
    recon: T.Tensor
    last_hidden: T.Tensor
    last_relu: np.ndarray


def forward(params: DecoderParams, inp, sizes: list[tuple[int, int]], dropout_enabled: bool = False,
            rng: np.random.Generator | None = None, dropout_p: float = 0.3) -> ForwardResult:
    x = inp if isinstance(inp, T.Tensor) else T.Tensor(inp)
    if x.shape[1:] != (sizes[0][1], sizes[0][0]):
        raise InvalidShapeError(f"input spatial size {x.shape[1:][::-1]} != first stage {sizes[0]}")
    blocks = len(sizes) - 1
    hidden = relu_map = None
    for i in range(blocks):
        x = T.linear_channel_combination(x, params[f"mix{i}"])
        x = T.bilinear_upsample(x, *sizes[i + 1])
        x = T.relu(x)
        relu_map = x.data
        x = T.channel_norm(x, params[f"gamma{i}"], params[f"beta{i}"])
        hidden = x
        x = T.channel_dropout(x, dropout_p, rng, enabled=dropout_enabled)
    recon = T.sigmoid(T.linear_channel_combination(x, params["head"]))
    return ForwardResult(recon, hidden, relu_map)


@dataclass
class FitResult:
    params: DecoderParams
    last_hidden: np.ndarray
    last_relu: np.ndarray
    recon: np.ndarray
    # rows of (total, recon, spatial) loss, one per optimisation step
    loss_history: np.ndarray
    sigma: float

    def write_loss_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "total", "recon", "spatial"])
            for i, row in enumerate(self.loss_history):
                wr.writerow([i, *(repr(float(v)) for v in row)])


def member_rngs(seed: int, index: int) -> dict[str, np.random.Generator]:
    """Independent streams for one ensemble member."""
    ss = np.random.SeedSequence([seed, index])
    names = ("weights", "input", "encoding", "dropout")
    return {n: np.random.default_rng(child) for n, child in zip(names, ss.spawn(len(names)))}


def fit(img: np.ndarray, cfg: DecoderConfig, decoder_index: int = 0) -> FitResult:
    """Fit one decoder to ``img`` ((3,H,W) colour or (H,W) gray, in [0, 1])."""
    rgb = as_rgb(img)
    _, h, w = rgb.shape
    sizes = stage_sizes(w, h, cfg.blocks)
    rngs = member_rngs(cfg.seed, decoder_index)

    enc = make_positional_encoding(cfg.l, w, h, rngs["encoding"])
    target = make_fit_target(img, enc)
    out_channels = target.tensor.shape[0]
    sigma = cfg.input_sigma(w, h)
    w0, h0 = sizes[0]
    inp = T.Tensor(make_decoder_input(cfg.k, w0, h0, sigma, rngs["input"]))
    params = init_params(cfg.k, cfg.blocks, out_channels, rngs["weights"])
    opt = T.Adam(params, lr=cfg.lr)

    rgb_range = target.rgb_range
    spatial_range = target.spatial_range
    history = np.empty((cfg.steps, 3))
    dropout = cfg.dropout_p > 0
    for step in range(cfg.steps):
        if step == cfg.lr_decay_step:
            dropout = False
            opt.lr = opt.lr * cfg.lr_decay_factor
        res = forward(params, inp, sizes, dropout, rngs["dropout"], cfg.dropout_p)
        rec = T.mse_subset(res.recon, target.tensor, rgb_range)
        spa = T.mse_subset(res.recon, target.tensor, spatial_range)
        loss = T.add(T.scale(rec, 1.0 - cfg.lam), T.scale(spa, cfg.lam))
        total = float(loss.data)
        if not math.isfinite(total):
            raise NumericFailureError(f"loss became {total} at step {step} (decoder {decoder_index})")
        history[step] = (total, float(rec.data), float(spa.data))
        opt.zero_grad()
        loss.backward()
        opt.step()

    final = forward(params, inp, sizes, False)
    return FitResult(params, final.last_hidden.data, final.last_relu, final.recon.data, history, sigma)


@dataclass
class EmbeddingMap:
    features: np.ndarray  # (nd * k, H, W)
    members: list[FitResult] = field(default_factory=list, repr=False)

    @property
    def dims(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[2]

    @property
    def height(self) -> int:
        return self.features.shape[1]

    def pixel(self, x: int, y: int) -> np.ndarray:
        return self.features[:, y, x]


def extract_embeddings(img: np.ndarray, cfg: DecoderConfig, threads: int = 1) -> EmbeddingMap:
    """Fit ``cfg.nd`` decoders and stack their last hidden maps channel-wise."""
    if threads > 1 and cfg.nd > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(lambda i: fit(img, cfg, i), range(cfg.nd)))
    else:
        members = [fit(img, cfg, i) for i in range(cfg.nd)]
    feats = np.concatenate([m.last_hidden for m in members])
    if not np.all(np.isfinite(feats)):
        raise NumericFailureError("non-finite embedding features")
    return EmbeddingMap(feats, members)
