"""Superpixel-based foreground segmentation for microscopy slices."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .decoder import DecoderConfig
from .errors import InvalidShapeError, NoThresholdError
from .pipeline import generate_superpixels

log = logging.getLogger(__name__)


@dataclass
class WeberMap:
    coefficients: np.ndarray  # one per dense superpixel label
    values: np.ndarray        # (H, W), each pixel carries its superpixel's coefficient
    labels: np.ndarray        # dense labels used for ``coefficients``


def superpixel_adjacency(labels: np.ndarray) -> sparse.csr_matrix:
    """Symmetric boolean adjacency (4-neighbourhood) between dense labels."""
    k = labels.max() + 1
    a = np.concatenate([labels[:, :-1].ravel(), labels[:-1, :].ravel()])
    b = np.concatenate([labels[:, 1:].ravel(), labels[1:, :].ravel()])
    diff = a != b
    rows = np.concatenate([a[diff], b[diff]])
    cols = np.concatenate([b[diff], a[diff]])
    adj = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(k, k))
    adj.data[:] = 1.0
    return adj


def weber_map(slice_: np.ndarray, sp: np.ndarray, floor: float = 1e-6) -> WeberMap:
    """Relative contrast of each superpixel against the pixels of its adjacent superpixels."""
    img = np.asarray(slice_, dtype=np.float64)
    if img.shape != np.shape(sp):
        raise InvalidShapeError(f"slice {img.shape} and labels {np.shape(sp)} differ")
    _, dense = np.unique(sp, return_inverse=True)
    dense = dense.reshape(img.shape)
    k = dense.max() + 1
    area = np.bincount(dense.ravel(), minlength=k).astype(np.float64)
    total = np.bincount(dense.ravel(), weights=img.ravel(), minlength=k)
    mean = total / area
    adj = superpixel_adjacency(dense)
    nb_total = adj @ total
    nb_area = adj @ area
    with np.errstate(invalid="ignore", divide="ignore"):
        nb_mean = nb_total / nb_area
    coeff = np.zeros(k)
    ok = (nb_area > 0) & (nb_mean > floor)
    coeff[ok] = (mean[ok] - nb_mean[ok]) / nb_mean[ok]
    if not ok.all():
        log.warning("%d superpixel(s) have a flat or empty neighbourhood; coefficient set to 0",
                    int((~ok).sum()))
    return WeberMap(coeff, coeff[dense], dense)


def _fixed_point(x: np.ndarray, tol: float, max_iter: int) -> float:
    t = x.mean()
    for _ in range(max_iter):
        above = x > t
        mu_hi = x[above].mean()
        mu_lo = x[~above].mean()
        t_new = (mu_lo - mu_hi) / (np.log(mu_lo) - np.log(mu_hi))
        done = abs(t_new - t) < tol
        t = t_new
        if done:
            break
    return t


def _polish(x: np.ndarray, t: float) -> float:
    """Walk the split next to ``t`` downhill in cross-entropy, one gap at a time.

    The fixed point solves the continuous stationarity condition, which on
    finite samples can sit a gap or two away from the discrete local minimum.
    Returns ``t`` itself when it already is that minimum, else the midpoint
    of the better gap.
    """
    xs = np.sort(x)
    csum = np.cumsum(xs)
    n = xs.size
    cut = np.flatnonzero(xs[1:] > xs[:-1])   # split after index cut: xs[:cut+1] below
    below = csum[cut]
    above = csum[-1] - below
    eta = -below * np.log(below / (cut + 1)) - above * np.log(above / (n - cut - 1))
    start = j = int(np.searchsorted(xs[cut + 1], t, side="right"))
    while True:
        nbrs = [i for i in (j - 1, j + 1) if 0 <= i < cut.size and eta[i] < eta[j]]
        if not nbrs:
            break
        j = min(nbrs, key=lambda i: eta[i])
    if j == start:
        return t
    return float((xs[cut[j]] + xs[cut[j] + 1]) / 2)


def li_threshold(values, max_iter: int = 100) -> float:
    """Minimum cross-entropy threshold by Li's fixed-point iteration.

    Values are shifted to be strictly positive first; the returned threshold is
    in the original units. Pixels strictly above the threshold are foreground.
    The fixed point is then nudged to the nearest discrete local minimum of the
    criterion. The search stays local on purpose: on skewed data such as Weber
    coefficients the global minimum often just splits off the heavy tail.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = v.min(initial=np.inf), v.max(initial=-np.inf)
    if v.size < 2 or not hi > lo:
        raise NoThresholdError("Li thresholding needs at least two distinct values")
    rng = hi - lo
    shift = -lo + 1e-6 * rng
    x = v + shift
    t = _polish(x, _fixed_point(x, 1e-7 * rng, max_iter))
    return float(t - shift)


def cross_entropy(values, t: float) -> float:
    """Li's criterion (up to a constant) for splitting positive ``values`` at ``t``."""
    x = np.asarray(values, dtype=np.float64).ravel()
    above = x > t
    out = 0.0
    for part in (x[above], x[~above]):
        if part.size:
            out -= part.sum() * np.log(part.mean())
    return out


def mask_from_labels(wm: WeberMap, per_pixel: bool = False) -> tuple[np.ndarray, float]:
    values = wm.values if per_pixel else wm.coefficients
    t = li_threshold(values)
    return wm.values > t, t


def segment_slice(slice_: np.ndarray, cfg: DecoderConfig, clusters: int = 600,
                  per_pixel: bool = False, threads: int = 1) -> tuple[np.ndarray, dict]:
    """Foreground mask of one grayscale slice, plus run metadata."""
    img = np.asarray(slice_, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidShapeError("segment_slice expects a single-channel slice")
    if not img.max() > img.min():
        raise NoThresholdError("constant slice has no foreground threshold")
    labels, _ = generate_superpixels(img, cfg, clusters, threads=threads)
    wm = weber_map(img, labels)
    mask, t = mask_from_labels(wm, per_pixel)
    meta = {
        "threshold": t,
        "threshold_mode": "per_pixel" if per_pixel else "per_superpixel",
        "num_superpixels": int(wm.coefficients.size),
    }
    return mask, meta
