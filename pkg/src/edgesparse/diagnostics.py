"""Edge-sparsity diagnostics: activated-region counts and their expectation."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError

_FOUR = ndimage.generate_binary_structure(2, 1)


def count_mask_regions(mask: np.ndarray, periodic: bool = False) -> int:
    """Number of 4-connected True regions; ``periodic`` wraps both axes."""
    lab, n = ndimage.label(mask, structure=_FOUR)
    if not periodic or n == 0:
        return n
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pairs = np.concatenate([
        np.stack([lab[:, 0], lab[:, -1]], axis=1),
        np.stack([lab[0, :], lab[-1, :]], axis=1),
    ])
    for a, b in pairs[(pairs[:, 0] > 0) & (pairs[:, 1] > 0)]:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return len({find(i) for i in range(1, n + 1)})


def count_activated_regions(maps: np.ndarray) -> float:
    """Average over channels of the number of 4-connected regions where maps > 0."""
    maps = np.asarray(maps)
    if maps.ndim == 2:
        maps = maps[None]
    if maps.shape[0] == 0:
        return 0.0
    return float(np.mean([count_mask_regions(ch > 0) for ch in maps]))


def expected_region_count(N: float, sigma: float, Z: float) -> float:
    """Expected Euler characteristic of a Z-thresholded Gaussian-blurred field on an N x N grid."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    return N**2 / (2 * sigma**2) * (2 * math.pi) ** -1.5 * Z * math.exp(-0.5 * Z**2)


def blurred_field(N: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance field: uniform noise circularly blurred with a Gaussian of std ``sigma``.

    Circular convolution keeps the field stationary on the torus, so region
    counts carry no border terms.
    """
    noise = rng.uniform(-1.0, 1.0, size=(N, N))
    d = np.minimum(np.arange(N), N - np.arange(N))
    k1 = np.exp(-0.5 * (d / sigma) ** 2)
    kernel = np.outer(k1, k1)
    field = np.real(np.fft.ifft2(np.fft.fft2(noise) * np.fft.fft2(kernel)))
    # var(uniform[-1,1]) = 1/3
    std = math.sqrt(np.sum(kernel**2) / 3.0)
    return field / std


def simulate_region_count(N: int, sigma: float, Z: float, trials: int, rng: np.random.Generator) -> float:
    counts = [count_mask_regions(blurred_field(N, sigma, rng) > Z, periodic=True) for _ in range(trials)]
    return float(np.mean(counts))
