"""Command-line interface.

Settings resolve in three layers: a preset, then an optional ``key=value``
config file, then explicit flags. Every command writes a ``.meta`` sidecar
holding the fully resolved settings in the same ``key=value`` format, so
passing it back through ``--config`` reproduces the run.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 when
``segment-vessels`` finished but some slices failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .decoder import PRESETS, DecoderConfig, fit
from .diagnostics import count_activated_regions
from .errors import EdgeSparseError, ImageIOError, InvalidParameterError
from .foreground import segment_slice
from .imaging import as_rgb, load_image, load_labels, save_image, save_labels
from .metrics import binary_metrics, boundary_map, evaluate, write_report_csv
from .pipeline import generate_superpixels

log = logging.getLogger("edgesparse")

THREADS_ENV = "EDGESPARSE_THREADS"
SLICE_SUFFIXES = (".pgm", ".png")

# config key -> (DecoderConfig field, parser)
DECODER_KEYS = {
    "channels": ("k", int),
    "blocks": ("blocks", int),
    "frequencies": ("l", int),
    "lambda": ("lam", float),
    "blur-factor": ("blur_factor", float),
    "sigma": ("sigma", float),
    "dropout": ("dropout_p", float),
    "lr": ("lr", float),
    "steps": ("steps", int),
    "decay-step": ("lr_decay_step", int),
    "decay-factor": ("lr_decay_factor", float),
    "decoders": ("nd", int),
    "seed": ("seed", int),
}
RUN_KEYS = {"preset": str, "clusters": int, "per-pixel": lambda s: _parse_bool(s), "sweep": str,
            "repeats": int}  # settings that are not decoder fields

COMMAND_DEFAULTS = {
    "superpixels": {"preset": "natural", "clusters": 100},
    "evaluate": {},
    "segment-vessels": {"preset": "downsized", "clusters": 600, "per-pixel": False},
    "diagnose": {"preset": "downsized", "steps": 400, "repeats": 1},
}


class UsageError(Exception):
    pass


def _parse_bool(s: str) -> bool:
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


# -- configuration ---------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or (key not in DECODER_KEYS and key not in RUN_KEYS):
            raise UsageError(f"{path}:{n}: expected a known key=value pair, got {line!r}")
        out[key] = value.strip()
    return out


def _convert(key: str, raw: str):
    """Typed value of one config-file entry."""
    conv = DECODER_KEYS[key][1] if key in DECODER_KEYS else RUN_KEYS[key]
    if key == "sigma" and raw.lower() in ("", "none"):
        return None
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def resolve(command: str, flags: dict, file_values: dict) -> tuple[dict, DecoderConfig | None]:
    """Merge preset < config file < flags into run settings and a decoder config."""
    layered = dict(COMMAND_DEFAULTS[command])
    layered.update({k: _convert(k, v) for k, v in file_values.items()})
    layered.update({k: v for k, v in flags.items() if v is not None})
    if command == "evaluate":
        return layered, None
    name = layered.get("preset")
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    base = PRESETS[name]
    changes = {DECODER_KEYS[k][0]: layered[k] for k in DECODER_KEYS if k in layered and k != "steps"}
    try:
        cfg = base.replace(**{k: v for k, v in changes.items() if k != "lr_decay_step"})
        if "steps" in layered:
            # a shorter run keeps the decay point at the same fraction of the schedule
            cfg = cfg.with_steps(layered["steps"])
        if "lr_decay_step" in changes:
            cfg = cfg.replace(lr_decay_step=changes["lr_decay_step"])
    except (InvalidParameterError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    clusters = layered.get("clusters")
    if clusters is not None and clusters < 1:
        raise UsageError(f"--clusters must be at least 1, got {clusters}")
    return layered, cfg


def sidecar_text(command: str, settings: dict, cfg: DecoderConfig | None, inputs: list[str]) -> str:
    lines = [f"# edgesparse {__version__} {command}"]
    lines += [f"# input={p}" for p in inputs]
    values = {k: v for k, v in settings.items() if k in RUN_KEYS}
    if cfg is not None:
        for key, (field, _) in DECODER_KEYS.items():
            values[key] = getattr(cfg, field)
    for key in sorted(values):
        v = values[key]
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key}={v}")
    return "\n".join(lines) + "\n"


# -- staged writing --------------------------------------------------------


class Staging:
    """Collects outputs in temporary files and moves them into place together."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def path(self, final) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{final.stem}.", suffix=final.suffix, dir=final.parent)
        os.close(fd)
        self._pending.append((Path(tmp), final))
        return Path(tmp)

    def text(self, final, content: str) -> None:
        self.path(final).write_text(content)

    def commit(self) -> None:
        umask = os.umask(0)
        os.umask(umask)
        for tmp, final in self._pending:
            # mkstemp creates owner-only files; give outputs the usual permissions
            os.chmod(tmp, 0o666 & ~umask)
            os.replace(tmp, final)
        self._pending.clear()

    def discard(self) -> None:
        for tmp, _ in self._pending:
            tmp.unlink(missing_ok=True)
        self._pending.clear()


@contextmanager
def staged():
    st = Staging()
    try:
        yield st
    except BaseException:
        st.discard()
        raise
    st.commit()


# -- commands --------------------------------------------------------------


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def overlay_image(img: np.ndarray, labels: np.ndarray) -> np.ndarray:
    rgb = as_rgb(img).copy()
    edge = boundary_map(labels, thin=True)
    rgb[0][edge] = 1.0
    rgb[1][edge] = 0.0
    rgb[2][edge] = 0.0
    return rgb


def labels_csv(labels: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("x,y,label\n")
    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    for x, y, v in zip(xs.ravel(), ys.ravel(), labels.ravel()):
        buf.write(f"{x},{y},{v}\n")
    return buf.getvalue()


def cmd_superpixels(args, settings, cfg) -> int:
    img = load_image(args.image)
    labels, _ = generate_superpixels(img, cfg, settings["clusters"], threads=args.threads)
    out = Path(args.output)
    with staged() as st:
        save_labels(labels, st.path(out))
        if args.csv:
            st.text(args.csv, labels_csv(labels))
        if args.overlay:
            save_image(overlay_image(img, labels), st.path(args.overlay))
        st.text(_meta_path(out), sidecar_text("superpixels", settings, cfg, [args.image]))
    print(f"{out}: {labels.max() + 1} superpixels")
    return 0


def cmd_evaluate(args, settings, cfg) -> int:
    sp = load_labels(args.labels)
    gts = [load_labels(p) for p in args.gt]
    report = evaluate(sp, gts)
    out = Path(args.output)
    with staged() as st:
        write_report_csv({Path(args.labels).name: report}, st.path(out))
        st.text(_meta_path(out), sidecar_text("evaluate", settings, None, [args.labels, *args.gt]))
    print(f"USE={report.use:.4f} BR={report.br:.4f} ASA={report.asa:.4f} "
          f"CO={report.co:.4f} regions={report.num_regions}")
    return 0


def _find_gold(gold_dir: Path, stem: str) -> Path | None:
    for suffix in SLICE_SUFFIXES:
        p = gold_dir / f"{stem}{suffix}"
        if p.exists():
            return p
    return None


def cmd_segment_vessels(args, settings, cfg) -> int:
    src = Path(args.slices)
    if not src.is_dir():
        raise ImageIOError(f"{src}: not a directory")
    slices = sorted(p for p in src.iterdir() if p.suffix.lower() in SLICE_SUFFIXES)
    if not slices:
        raise ImageIOError(f"{src}: no .pgm or .png slices found")
    out = Path(args.output)
    gold_dir = Path(args.gold) if args.gold else None
    rows, scores, failed = [], [], []
    with staged() as st:
        for path in slices:
            try:
                img = load_image(path)
                if img.ndim == 3:
                    img = img.mean(axis=0)
                mask, meta = segment_slice(img, cfg, settings["clusters"], per_pixel=settings["per-pixel"],
                                           threads=args.threads)
                save_image(mask.astype(np.float64), st.path(out / f"{path.stem}.pgm"))
            except (EdgeSparseError, OSError, ValueError) as exc:
                log.error("slice %s failed: %s", path.name, exc)
                failed.append(path.name)
                rows.append([path.name, "failed", "", "", "", str(exc)])
                continue
            rows.append([path.name, "ok", repr(meta["threshold"]), meta["threshold_mode"],
                         meta["num_superpixels"], ""])
            if gold_dir is not None:
                gpath = _find_gold(gold_dir, path.stem)
                if gpath is None:
                    log.warning("no gold mask for %s", path.name)
                    continue
                gold = load_labels(gpath) > 0
                scores.append([path.name, *binary_metrics(mask, gold)])
        st.text(out / "slices.csv", _csv_text(
            ["slice", "status", "threshold", "threshold_mode", "num_superpixels", "error"], rows))
        if gold_dir is not None:
            st.text(out / "metrics.csv", _csv_text(["slice", "se", "sp", "dc", "ji"], _with_mean(scores)))
        st.text(out / "run.meta", sidecar_text("segment-vessels", settings, cfg, [str(src)]))
    done = len(slices) - len(failed)
    print(f"{done}/{len(slices)} slices segmented into {out}")
    if failed:
        print("failed slices: " + ", ".join(failed), file=sys.stderr)
        return 3 if done else 1
    return 0


def _with_mean(scores: list[list]) -> list[list]:
    if not scores:
        return []
    cols = np.array([s[1:] for s in scores], dtype=np.float64)
    return [[s[0], *map(repr, map(float, s[1:]))] for s in scores] + [
        ["mean", *map(repr, map(float, cols.mean(axis=0)))]
    ]


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    """``"b=0.0001,0.0002"`` or ``"sigma=1,3,5"`` into a parameter name and values."""
    name, sep, rest = spec.partition("=")
    name = name.strip().lower()
    if not sep or name not in ("b", "sigma"):
        raise UsageError(f"sweep must look like b=v1,v2,... or sigma=v1,v2,..., got {spec!r}")
    try:
        values = [float(v) for v in rest.split(",")]
    except ValueError:
        raise UsageError(f"sweep values must be numbers: {rest!r}") from None
    if not values or any(not v > 0 for v in values):
        raise UsageError(f"sweep values must be positive: {rest!r}")
    return name, values


def sweep_rows(img: np.ndarray, cfg: DecoderConfig, name: str, values: list[float], repeats: int) -> list[list]:
    rows = []
    for v in values:
        point = cfg.replace(blur_factor=v, sigma=None) if name == "b" else cfg.replace(sigma=v)
        regions, losses = [], []
        for r in range(repeats):
            res = fit(img, point.replace(seed=cfg.seed + r))
            regions.append(count_activated_regions(res.last_relu))
            losses.append(res.loss_history[-1, 0])
        rows.append([repr(v), repr(float(np.mean(regions))), repr(float(np.mean(losses)))])
    return rows


def cmd_diagnose(args, settings, cfg) -> int:
    name, values = parse_sweep(settings["sweep"])
    img = load_image(args.image)
    rows = sweep_rows(img, cfg, name, values, settings["repeats"])
    out = Path(args.output)
    with staged() as st:
        st.text(out, _csv_text([name, "regions", "loss"], rows))
        st.text(_meta_path(out), sidecar_text("diagnose", settings, cfg, [args.image]))
    print(f"{out}: {len(rows)} sweep points")
    return 0


def _meta_path(out: Path) -> Path:
    return out.with_name(out.name + ".meta")


# -- argument parsing ------------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _decoder_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("decoder")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--seed", type=int)
    g.add_argument("--lambda", dest="lambda_", type=float, metavar="LAMBDA",
                   help="weight of the positional-encoding loss, in [0, 1]")
    g.add_argument("--blur-factor", type=float)
    g.add_argument("--sigma", type=float, help="input blur in pixels; overrides --blur-factor")
    g.add_argument("--channels", type=int)
    g.add_argument("--blocks", type=int)
    g.add_argument("--frequencies", type=int)
    g.add_argument("--decoders", type=int)
    g.add_argument("--steps", type=int)
    g.add_argument("--decay-step", type=int)
    g.add_argument("--dropout", type=float)
    g.add_argument("--lr", type=float)
    p.add_argument("--threads", type=_positive_int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--config", help="key=value file; flags take precedence over it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesparse", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("superpixels", help="compute a superpixel label map")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True, help="16-bit PGM label map")
    p.add_argument("--clusters", type=int)
    p.add_argument("--csv", help="also write x,y,label rows")
    p.add_argument("--overlay", help="PNG with superpixel boundaries in red")
    _decoder_flags(p)

    p = sub.add_parser("evaluate", help="score a label map against ground truths")
    p.add_argument("labels")
    p.add_argument("gt", nargs="+")
    p.add_argument("-o", "--output", required=True, help="metric CSV")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--threads", type=_positive_int, help=argparse.SUPPRESS)

    p = sub.add_parser("segment-vessels", help="foreground masks for a directory of slices")
    p.add_argument("slices")
    p.add_argument("-o", "--output", "--out-dir", dest="output", required=True)
    p.add_argument("--gold", help="directory of gold-standard masks with matching names")
    p.add_argument("--clusters", type=int)
    p.add_argument("--per-pixel", action="store_const", const=True,
                   help="threshold the pixel map instead of one value per superpixel")
    _decoder_flags(p)

    p = sub.add_parser("diagnose", help="activated-region counts over an input-blur sweep")
    p.add_argument("image")
    p.add_argument("--sweep", help="b=v1,v2,... or sigma=v1,v2,...")
    p.add_argument("--repeats", type=_positive_int, help="seeds averaged per sweep point")
    p.add_argument("-o", "--output", required=True, help="CSV path")
    _decoder_flags(p)
    return parser


def _flag_values(args) -> dict:
    flags = {}
    for key in list(DECODER_KEYS) + list(RUN_KEYS):
        attr = "lambda_" if key == "lambda" else key.replace("-", "_")
        if hasattr(args, attr):
            flags[key] = getattr(args, attr)
    return flags


COMMANDS = {
    "superpixels": cmd_superpixels,
    "evaluate": cmd_evaluate,
    "segment-vessels": cmd_segment_vessels,
    "diagnose": cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config(args.config) if args.config else {}
        settings, cfg = resolve(args.command, _flag_values(args), file_values)
        if args.command == "diagnose" and not settings.get("sweep"):
            raise UsageError("diagnose needs --sweep (or sweep= in the config file)")
        if args.command == "diagnose":
            parse_sweep(settings["sweep"])
        if args.threads is None:
            args.threads = _default_threads()
    except UsageError as exc:
        parser.error(str(exc))
    try:
        return COMMANDS[args.command](args, settings, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (EdgeSparseError, OSError) as exc:
        print(f"edgesparse {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
