"""Blurred-noise decoder input and the positionally encoded fit target."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, InvalidShapeError
from .imaging import as_rgb, gaussian_blur, rgb_to_lightness


def blur_sigma(b: float, w: int, h: int) -> int:
    """Input blur standard deviation for an image of ``w`` x ``h`` pixels.

    Always an odd integer, ``2 * floor(b * w * h / 2) + 1``.
    """
    if not b > 0:
        raise InvalidParameterError(f"blur factor must be positive, got {b}")
    return 2 * math.floor(b * w * h / 2) + 1


def make_decoder_input(k: int, w0: int, h0: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if k < 1:
        raise InvalidParameterError("need at least one input channel")
    noise = rng.uniform(-1.0, 1.0, size=(k, h0, w0))
    return gaussian_blur(noise, sigma)


@dataclass(frozen=True)
class PositionalEncoding:
    l: int
    offsets_x: np.ndarray
    offsets_y: np.ndarray
    maps: np.ndarray  # (8l, H, W), values in [0, 1]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([self.offsets_x, self.offsets_y])


def encode_axis(z: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """(sin, -sin, cos, -cos) per frequency 2^1..2^l, rescaled to [0, 1]."""
    chans = []
    for i, phi in enumerate(offsets, start=1):
        arg = (2.0**i) * math.pi * z + phi
        s, c = np.sin(arg), np.cos(arg)
        chans += [s, -s, c, -c]
    return 0.5 * np.stack(chans) + 0.5


def make_positional_encoding(l: int, w: int, h: int, rng: np.random.Generator) -> PositionalEncoding:
    if l < 1:
        raise InvalidParameterError("need at least one frequency")
    xs = np.arange(w) / (w - 1) if w > 1 else np.zeros(w)
    ys = np.arange(h) / (h - 1) if h > 1 else np.zeros(h)
    xhat = np.broadcast_to(xs[None, :], (h, w))
    yhat = np.broadcast_to(ys[:, None], (h, w))
    off_x = rng.uniform(0.0, 2 * math.pi, size=l)
    off_y = rng.uniform(0.0, 2 * math.pi, size=l)
    maps = np.concatenate([encode_axis(xhat, off_x), encode_axis(yhat, off_y)])
    return PositionalEncoding(l, off_x, off_y, maps)


@dataclass(frozen=True)
class FitTarget:
    tensor: np.ndarray  # (3 + 8l, H, W)

    rgb_range = slice(0, 3)

    @property
    def spatial_range(self) -> slice:
        return slice(3, self.tensor.shape[0])


def make_fit_target(img: np.ndarray, enc: PositionalEncoding) -> FitTarget:
    """Stack RGB with every encoding channel multiplied by lightness."""
    rgb = as_rgb(img)
    if rgb.shape[1:] != enc.maps.shape[1:]:
        raise InvalidShapeError(f"image {rgb.shape[1:]} and encoding {enc.maps.shape[1:]} disagree")
    L = rgb_to_lightness(img)
    return FitTarget(np.concatenate([rgb, enc.maps * L[None]]))
