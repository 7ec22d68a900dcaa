"""Image I/O, colour conversion, blurring and gradients.

Conventions: grayscale images are ``(H, W)`` float arrays, colour images are
``(3, H, W)`` float arrays in [0, 1]; multi-channel tensors are ``(C, H, W)``.
Label maps are integer ``(H, W)`` arrays.
"""
from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ImageIOError, InvalidParameterError

# -- netpbm ----------------------------------------------------------------


def _read_netpbm(path: Path) -> tuple[np.ndarray, int]:
    raw = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    n = len(raw)
    while len(tokens) < 4:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated netpbm header")
        tokens.append(raw[start:pos])
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageIOError(f"{path}: unsupported netpbm magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageIOError(f"{path}: malformed header ({exc})") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageIOError(f"{path}: invalid header values {width}x{height} maxval={maxval}")
    pos += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    body = raw[pos : pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise ImageIOError(f"{path}: expected {count * dtype.itemsize} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).astype(np.int64)
    if data.max(initial=0) > maxval:
        raise ImageIOError(f"{path}: sample exceeds maxval {maxval}")
    if channels == 3:
        data = data.reshape(height, width, 3).transpose(2, 0, 1)
    else:
        data = data.reshape(height, width)
    return data, maxval


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _netpbm_bytes(data: np.ndarray, maxval: int) -> bytes:
    if data.ndim == 3:
        magic, body = b"P6", data.transpose(1, 2, 0)
        h, w = data.shape[1:]
    else:
        magic, body = b"P5", data
        h, w = data.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    return header + np.ascontiguousarray(body).astype(dtype).tobytes()


# -- public I/O ------------------------------------------------------------


def _read_raw(path) -> tuple[np.ndarray, int]:
    path = Path(path)
    if not path.exists():
        raise ImageIOError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return _read_netpbm(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.int64)
                return arr, 65535
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.int64)
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"{path}: {exc}") from None
    if arr.ndim == 3:
        arr = arr.transpose(2, 0, 1)
    return arr, 255


def load_image(path) -> np.ndarray:
    """Read PPM/PGM/PNG, normalised to [0, 1]. Returns (3,H,W) or (H,W)."""
    data, maxval = _read_raw(path)
    return data.astype(np.float64) / maxval


def save_image(img: np.ndarray, path, bits: int = 8) -> None:
    """Write a [0, 1] image as 8- or 16-bit PGM/PPM, or PNG."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] != 3:
        raise ImageIOError(f"{path}: colour images must have 3 channels")
    if not np.all(np.isfinite(img)) or img.min(initial=0) < 0 or img.max(initial=0) > 1:
        raise ImageIOError(f"{path}: values must lie in [0, 1]")
    maxval = 255 if bits == 8 else 65535
    q = np.rint(img * maxval).astype(np.int64)
    _write_quantised(q, maxval, Path(path))


def _write_quantised(q: np.ndarray, maxval: int, path: Path) -> None:
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        _atomic_write(path, _netpbm_bytes(q, maxval))
        return
    if suffix != ".png":
        raise ImageIOError(f"{path}: unsupported extension {suffix!r}")
    if q.ndim == 3:
        if maxval != 255:
            raise ImageIOError(f"{path}: 16-bit colour PNG is not supported")
        im = Image.fromarray(q.transpose(1, 2, 0).astype(np.uint8), "RGB")
    elif maxval == 255:
        im = Image.fromarray(q.astype(np.uint8), "L")
    else:
        im = Image.fromarray(q.astype(np.uint16))
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}.png")
    im.save(tmp)
    os.replace(tmp, path)


def load_labels(path) -> np.ndarray:
    """Read an integer label map (8/16-bit PGM or grayscale PNG) without normalising."""
    data, _ = _read_raw(path)
    if data.ndim != 2:
        raise ImageIOError(f"{path}: label maps must be single-channel")
    return data


def save_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ImageIOError(f"{path}: label maps must be 2-D")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ImageIOError(f"{path}: labels must fit in 16 bits")
    _write_quantised(labels.astype(np.int64), 65535, Path(path))


def as_rgb(img: np.ndarray) -> np.ndarray:
    """Grayscale inputs are replicated to three channels."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return np.repeat(img[None], 3, axis=0)
    return img


# -- colour ----------------------------------------------------------------

_RGB_TO_Y = np.array([0.2126729, 0.7151522, 0.0721750])  # D65 luminance row
_LAB_DELTA = 6.0 / 29.0


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lightness(img: np.ndarray) -> np.ndarray:
    """CIELAB L* / 100 of an sRGB image; grayscale input is returned as is."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img.copy()
    lin = srgb_to_linear(img)
    # Y of the D65 white is 1, so no normalisation is needed for L*
    Y = np.tensordot(_RGB_TO_Y, lin, axes=(0, 0))
    f = np.where(Y > _LAB_DELTA**3, np.cbrt(Y), Y / (3 * _LAB_DELTA**2) + 4.0 / 29.0)
    return (116.0 * f - 16.0) / 100.0


# -- filtering -------------------------------------------------------------


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of each channel, reflect-padded at the borders."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(img, k, axis=-1, mode="reflect")
    return ndimage.correlate1d(out, k, axis=-2, mode="reflect")


def mean_gradient_magnitude(x: np.ndarray) -> np.ndarray:
    """Per-pixel channel mean of the central-difference gradient norm."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    gy, gx = np.gradient(x, axis=(1, 2))
    return np.sqrt(gx**2 + gy**2).mean(axis=0)
