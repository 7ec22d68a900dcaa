"""SLIC-like clustering of pixel embeddings into 4-connected superpixels."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import TooFewClustersError, TooManyClustersError
from .imaging import mean_gradient_magnitude


def grid_seed_count(requested: int, w: int, h: int) -> tuple[int, int]:
    """Grid dimensions ``(n_w, n_h)`` for a requested number of clusters."""
    if requested < 1:
        raise TooFewClustersError(f"requested {requested} clusters")
    # floor(sqrt(q)) == isqrt(floor(q)) for q >= 0; exact for integer inputs
    n_w = math.isqrt(requested * w // h)
    if n_w == 0:
        raise TooFewClustersError(f"{requested} clusters on {w}x{h} gives an empty grid row")
    n_h = requested // n_w
    if n_h == 0:
        raise TooFewClustersError(f"{requested} clusters on {w}x{h} gives an empty grid column")
    return n_w, n_h


def grid_seeds(n_w: int, n_h: int, w: int, h: int) -> np.ndarray:
    """Cell centres of a uniform ``n_w`` x ``n_h`` grid as (y, x) rows."""
    xs = np.floor((np.arange(n_w) + 0.5) * w / n_w).astype(int)
    ys = np.floor((np.arange(n_h) + 0.5) * h / n_h).astype(int)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def perturb_seeds(seeds: np.ndarray, embedding: np.ndarray, radius: int = 2) -> np.ndarray:
    """Move every seed to the lowest mean-gradient pixel of its 5x5 window.

    Ties go to the first pixel in row-major order within the (border-clipped) window.
    """
    grad = mean_gradient_magnitude(embedding)
    h, w = grad.shape
    out = np.empty_like(seeds)
    for i, (y, x) in enumerate(seeds):
        y0, y1 = max(0, y - radius), min(h, y + radius + 1)
        x0, x1 = max(0, x - radius), min(w, x + radius + 1)
        win = grad[y0:y1, x0:x1]
        dy, dx = np.unravel_index(np.argmin(win), win.shape)
        out[i] = (y0 + dy, x0 + dx)
    return out


# -- connectivity ----------------------------------------------------------


def _grid_edges(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def label_components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of equal-label pixels. Returns (component map, count)."""
    h, w = labels.shape
    flat = labels.ravel()
    a, b = _grid_edges(h, w)
    same = flat[a] == flat[b]
    g = sparse.coo_matrix((np.ones(same.sum(), dtype=np.int8), (a[same], b[same])), shape=(h * w, h * w))
    n, comp = connected_components(g, directed=False)
    return comp.reshape(h, w), n


def enforce_connectivity(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Keep each label's largest component; hand every other fragment to a random neighbour label."""
    lab = np.array(labels, copy=True)
    h, w = lab.shape
    a, b = _grid_edges(h, w)
    while True:
        comp, n = label_components(lab)
        cflat = comp.ravel()
        lflat = lab.ravel()
        sizes = np.bincount(cflat, minlength=n)
        comp_label = np.empty(n, dtype=lflat.dtype)
        comp_label[cflat] = lflat
        # largest component per label; first in scan order on ties
        first_pixel = np.full(n, h * w)
        np.minimum.at(first_pixel, cflat, np.arange(h * w))
        order = np.lexsort((first_pixel, -sizes, comp_label))
        keep = np.zeros(n, dtype=bool)
        seen_label = np.r_[True, comp_label[order][1:] != comp_label[order][:-1]]
        keep[order[seen_label]] = True
        fragments = np.flatnonzero(~keep)
        if fragments.size == 0:
            return lab
        # boundary pixel pairs between different components, both directions
        cross = cflat[a] != cflat[b]
        src = np.concatenate([cflat[a][cross], cflat[b][cross]])
        nbr = np.concatenate([b[cross], a[cross]])
        sort = np.argsort(src, kind="stable")
        src, nbr = src[sort], nbr[sort]
        starts = np.searchsorted(src, fragments, side="left")
        ends = np.searchsorted(src, fragments, side="right")
        by_comp = np.argsort(cflat, kind="stable")
        comp_start = np.r_[0, np.cumsum(sizes)]
        # process in scan order of each fragment's first pixel
        for f in sorted(range(fragments.size), key=lambda i: first_pixel[fragments[i]]):
            frag = fragments[f]
            pix = by_comp[comp_start[frag]:comp_start[frag + 1]]
            own = lflat[pix[0]]
            cand = np.unique(lflat[nbr[starts[f]:ends[f]]])
            cand = cand[cand != own]
            if cand.size == 0:
                continue
            lflat[pix] = cand[rng.integers(cand.size)]
        lab = lflat.reshape(h, w)


def relabel_dense(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape)


# -- clustering ------------------------------------------------------------


@dataclass
class ClusterState:
    centers: np.ndarray    # (K, D) mean embedding
    centroids: np.ndarray  # (K, 2) mean (y, x)
    counts: np.ndarray     # (K,)
    iterations: int = 0
    changed: list[int] = field(default_factory=list)


def _update(F: np.ndarray, coords: np.ndarray, labels: np.ndarray, state: ClusterState) -> None:
    K = state.centers.shape[0]
    N = labels.size
    onehot = sparse.csr_matrix((np.ones(N), (labels, np.arange(N))), shape=(K, N))
    counts = np.asarray(onehot.sum(axis=1)).ravel()
    nz = counts > 0
    # empty clusters keep their last center
    state.centers[nz] = (onehot @ F)[nz] / counts[nz, None]
    state.centroids[nz] = (onehot @ coords)[nz] / counts[nz, None]
    state.counts = counts


def cluster_with_state(embedding: np.ndarray, requested: int, rng: np.random.Generator,
                       window: float | None = 2.0, max_iter: int = 100,
                       tol: float = 0.001) -> tuple[np.ndarray, ClusterState]:
    """Cluster a (D, H, W) embedding. ``window`` is the search half-width in grid steps
    (Chebyshev, around each cluster's spatial centroid); ``None`` searches everywhere."""
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.ndim == 2:
        emb = emb[None]
    D, h, w = emb.shape
    N = h * w
    if requested > N:
        raise TooManyClustersError(f"{requested} clusters requested for {N} pixels")
    n_w, n_h = grid_seed_count(requested, w, h)
    seeds = perturb_seeds(grid_seeds(n_w, n_h, w, h), emb)
    K = len(seeds)
    step = math.sqrt(N / K)
    reach = math.inf if window is None else window * step

    F = emb.reshape(D, N).T.copy()
    yy, xx = np.mgrid[0:h, 0:w]
    coords = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(np.float64)
    state = ClusterState(
        centers=F[seeds[:, 0] * w + seeds[:, 1]].copy(),
        centroids=seeds.astype(np.float64),
        counts=np.zeros(K),
    )
    # start from the grid cells so that every pixel has a label before the first sweep
    cell_x = np.minimum((xx * n_w) // w, n_w - 1)
    cell_y = np.minimum((yy * n_h) // h, n_h - 1)
    labels = (cell_y * n_w + cell_x).ravel()

    for it in range(max_iter):
        best = np.full(N, np.inf)
        best_xy = np.full(N, np.inf)
        new = labels.copy()
        for c in range(K):
            cy, cx = state.centroids[c]
            if math.isinf(reach):
                y0, y1, x0, x1 = 0, h, 0, w
            else:
                y0, y1 = max(0, math.ceil(cy - reach)), min(h, math.floor(cy + reach) + 1)
                x0, x1 = max(0, math.ceil(cx - reach)), min(w, math.floor(cx + reach) + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            idx = (np.arange(y0, y1)[:, None] * w + np.arange(x0, x1)[None, :]).ravel()
            diff = F[idx] - state.centers[c]
            d = np.einsum("ij,ij->i", diff, diff)
            # exact embedding ties go to the spatially closer centroid
            dxy = (coords[idx, 0] - cy) ** 2 + (coords[idx, 1] - cx) ** 2
            b = best[idx]
            better = (d < b) | ((d == b) & (dxy < best_xy[idx]))
            sel = idx[better]
            best[sel] = d[better]
            best_xy[sel] = dxy[better]
            new[sel] = c
        _update(F, coords, new, state)
        new = enforce_connectivity(new.reshape(h, w), rng).ravel()
        _update(F, coords, new, state)
        changed = int(np.count_nonzero(new != labels))
        labels = new
        state.iterations = it + 1
        state.changed.append(changed)
        if changed < tol * N:
            break
    return relabel_dense(labels.reshape(h, w)), state


def cluster(embedding: np.ndarray, requested: int, rng: np.random.Generator, **kwargs) -> np.ndarray:
    labels, _ = cluster_with_state(embedding, requested, rng, **kwargs)
    return labels
