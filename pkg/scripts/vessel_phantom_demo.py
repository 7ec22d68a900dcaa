"""Write a small stack of synthetic vessel slices and their gold masks.

Each slice is a bright sinusoidal tube on a dark background with Gaussian
noise, stored as 16-bit PGM. Feed the result to the CLI:

    python scripts/vessel_phantom_demo.py /tmp/phantom --slices 3
    edgesparse segment-vessels /tmp/phantom/slices -o /tmp/phantom/out \\
        --gold /tmp/phantom/gold --clusters 200
"""
import argparse
from pathlib import Path

import numpy as np

from edgesparse.imaging import save_image


def phantom(seed, n=64, width=5.0):
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    centre = n / 2 + 0.25 * n * np.sin(2 * np.pi * xx / n)
    mask = np.abs(yy - centre) < width / 2
    img = np.where(mask, 0.8, 0.2) + np.random.default_rng(seed).normal(0, 0.05, (n, n))
    return np.clip(img, 0, 1), mask


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    ap.add_argument("--slices", type=int, default=3)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--width", type=float, default=5.0)
    args = ap.parse_args()

    (args.root / "slices").mkdir(parents=True, exist_ok=True)
    (args.root / "gold").mkdir(parents=True, exist_ok=True)
    for i in range(args.slices):
        img, mask = phantom(200 + i, args.size, args.width)
        save_image(img, args.root / "slices" / f"slice{i:03d}.pgm", bits=16)
        save_image(mask.astype(float), args.root / "gold" / f"slice{i:03d}.pgm")
    print(f"wrote {args.slices} slices under {args.root}")


if __name__ == "__main__":
    main()
