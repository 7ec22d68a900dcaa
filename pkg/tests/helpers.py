"""Independent oracles shared by the test modules."""
from __future__ import annotations

from collections import deque

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max abs difference relative to the largest gradient entry."""
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


def away_from_zero(rng, shape, margin=0.05):
    """Random values kept clear of the ReLU kink so central differences stay valid."""
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def check_grad(build, leaves, weights):
    """Compare analytic and central-difference gradients of sum(weights * build())."""

    def f():
        return float(np.sum(build().data * weights))

    for leaf in leaves:
        leaf.grad = None
    _backprop_weighted(build(), weights)
    errs = []
    for leaf in leaves:
        num = numeric_grad(f, leaf.data)
        errs.append(rel_error(leaf.grad, num))
    return max(errs)


def _backprop_weighted(out, weights):
    # seed the output gradient directly and run the reverse sweep
    order, seen, stack = [], set(), [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents)
    out.grad = np.array(weights, dtype=float)
    for node in reversed(order):
        if node.grad is not None:
            node._backward()


def flood_fill_count(labels: np.ndarray, mask: np.ndarray | None = None) -> int:
    """Count 4-connected components of equal label (restricted to ``mask`` if given)."""
    h, w = labels.shape
    seen = np.zeros((h, w), bool)
    if mask is not None:
        seen |= ~mask
    count = 0
    for y in range(h):
        for x in range(w):
            if seen[y, x]:
                continue
            count += 1
            lab = labels[y, x]
            q = deque([(y, x)])
            seen[y, x] = True
            while q:
                cy, cx = q.popleft()
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == lab:
                        seen[ny, nx] = True
                        q.append((ny, nx))
    return count


def labels_connected(labels: np.ndarray) -> bool:
    return flood_fill_count(labels) == len(np.unique(labels))


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """True if two labelings induce the same partition regardless of label names."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def quadrant_image(seed: int, n: int = 64, noise: float = 0.05):
    """Four flat colour quadrants plus Gaussian noise, and the quadrant labels."""
    colours = np.array([[0.9, 0.2, 0.2], [0.2, 0.7, 0.2], [0.2, 0.3, 0.9], [0.9, 0.9, 0.3]])
    gt = np.zeros((n, n), int)
    gt[: n // 2, n // 2 :] = 1
    gt[n // 2 :, : n // 2] = 2
    gt[n // 2 :, n // 2 :] = 3
    img = colours[gt].transpose(2, 0, 1) + np.random.default_rng(seed).normal(0, noise, (3, n, n))
    return np.clip(img, 0, 1), gt


def toy_decoder_gradients(seed: int, k: int = 4, size: int = 8, blocks: int = 2, lam: float = 0.3,
                          h: float = 1e-6):
    """Analytic and central-difference gradients of the weighted fit loss on a tiny decoder."""
    from edgesparse import tensor as T
    from edgesparse.decoder import forward, init_params, stage_sizes
    from edgesparse.encoding import make_fit_target, make_positional_encoding

    rng = np.random.default_rng(seed)
    img = rng.random((3, size, size))
    target = make_fit_target(img, make_positional_encoding(1, size, size, rng)).tensor
    sizes = stage_sizes(size, size, blocks)
    inp = rng.uniform(-1, 1, size=(k, sizes[0][1], sizes[0][0]))
    params = init_params(k, blocks, target.shape[0], rng)
    for name, p in params.items():
        if name.startswith(("gamma", "beta")):
            p.data += rng.normal(0, 0.2, size=p.shape)

    def loss_tensor():
        recon = forward(params, inp, sizes).recon
        rec = T.mse_subset(recon, target, slice(0, 3))
        spa = T.mse_subset(recon, target, slice(3, target.shape[0]))
        return T.add(T.scale(rec, 1 - lam), T.scale(spa, lam))

    for p in params.values():
        p.grad = None
    loss_tensor().backward()
    analytic = np.concatenate([p.grad.ravel() for p in params.values()])
    numeric = np.concatenate([
        numeric_grad(lambda: float(loss_tensor().data), p.data, h=h).ravel() for p in params.values()
    ])
    return analytic, numeric


# -- brute-force metric oracles ---------------------------------------------
# Plain loops over pixels and label pairs; no shared code with the package.


def _pixels(labels):
    h, w = labels.shape
    return [(y, x) for y in range(h) for x in range(w)]


def brute_use(sp, gt):
    n = sp.size
    total = 0
    for g in set(gt.ravel().tolist()):
        for s in set(sp.ravel().tolist()):
            if np.any((sp == s) & (gt == g)):
                total += int(np.sum(sp == s))
    return (total - n) / n


def brute_asa(sp, gt):
    best = 0
    for s in set(sp.ravel().tolist()):
        best += max(int(np.sum((sp == s) & (gt == g))) for g in set(gt.ravel().tolist()))
    return best / sp.size


def _is_boundary(lab, y, x):
    h, w = lab.shape
    for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
        if 0 <= ny < h and 0 <= nx < w and lab[ny, nx] != lab[y, x]:
            return True
    return False


def brute_br(sp, gt, r=2):
    h, w = gt.shape
    gt_b = [(y, x) for y, x in _pixels(gt) if _is_boundary(gt, y, x)]
    if not gt_b:
        return 1.0
    hit = 0
    for y, x in gt_b:
        found = False
        for ny in range(max(0, y - r), min(h, y + r + 1)):
            for nx in range(max(0, x - r), min(w, x + r + 1)):
                if _is_boundary(sp, ny, nx):
                    found = True
        hit += found
    return hit / len(gt_b)


def brute_co(sp):
    h, w = sp.shape
    total = 0.0
    for s in set(sp.ravel().tolist()):
        area = int(np.sum(sp == s))
        per = 0
        for y, x in _pixels(sp):
            if sp[y, x] != s:
                continue
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if not (0 <= ny < h and 0 <= nx < w) or sp[ny, nx] != s:
                    per += 1
        total += area * min(1.0, 4 * np.pi * area / per**2)
    return total / sp.size


def random_labeling(rng, max_side=12, max_labels=6):
    h, w = (int(v) for v in rng.integers(1, max_side + 1, size=2))
    return rng.integers(0, int(rng.integers(1, max_labels + 1)), size=(h, w))


def bimodal_sample(rng, n=400):
    """Two Gaussian modes at random positions, scale and mixing weight."""
    lo = rng.uniform(-5, 5)
    gap = rng.uniform(2, 10)
    sd = rng.uniform(0.1, 0.5)
    frac = rng.uniform(0.2, 0.8)
    k = int(n * frac)
    return np.concatenate([rng.normal(lo, sd, k), rng.normal(lo + gap, sd, n - k)])


def li_scan(values, points=512):
    """Exhaustive search of Li's cross-entropy over an even grid of thresholds."""
    v = np.asarray(values, dtype=np.float64)
    x = v - v.min() + 1e-6 * (v.max() - v.min())
    best_t, best = None, np.inf
    for t in np.linspace(x.min(), x.max(), points + 2)[1:-1]:
        hi, lo = x[x > t], x[x <= t]
        if hi.size == 0 or lo.size == 0:
            continue
        eta = -hi.sum() * np.log(hi.mean()) - lo.sum() * np.log(lo.mean())
        if eta < best:
            best_t, best = t, eta
    return best_t + v.min() - 1e-6 * (v.max() - v.min())


def vessel_phantom(seed: int, n: int = 64, width: float = 5.0):
    """Bright sinusoidal tube (0.8) on a dark background (0.2) plus noise of std 0.05."""
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    centre = n / 2 + 0.25 * n * np.sin(2 * np.pi * xx / n)
    mask = np.abs(yy - centre) < width / 2
    img = np.where(mask, 0.8, 0.2) + np.random.default_rng(seed).normal(0, 0.05, (n, n))
    return np.clip(img, 0, 1), mask


# Acceptance results collected during the run and printed in the terminal summary.
ACCEPTANCE: list[tuple[str, bool, str]] = []


def report(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
    return passed
