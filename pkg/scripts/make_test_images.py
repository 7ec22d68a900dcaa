"""Freeze a few small natural crops into tests/data.

The crops come from scikit-image's bundled sample images, so the test suite
itself never needs scikit-image. Rerunning this script reproduces the files
byte for byte.
"""
from pathlib import Path

import numpy as np
from skimage import data, transform

from edgesparse.imaging import save_image

OUT = Path(__file__).resolve().parents[1] / "tests" / "data"

# (name, loader, top, left, height, width, downscale)
CROPS = [
    ("astronaut_96x64", data.astronaut, 0, 100, 256, 384, 4),
    ("coffee_48x32", data.coffee, 100, 150, 128, 192, 4),
    ("chelsea_48x32", data.chelsea, 40, 100, 128, 192, 4),
    ("rocket_48x32", data.rocket, 150, 120, 128, 192, 4),
    ("astronaut_48x32", data.astronaut, 250, 200, 128, 192, 4),
    ("coffee_64x64", data.coffee, 60, 200, 256, 256, 4),
]


def crop(loader, top, left, height, width, factor):
    img = loader()[top : top + height, left : left + width].astype(np.float64) / 255.0
    small = transform.downscale_local_mean(img, (factor, factor, 1))
    return np.clip(small, 0, 1).transpose(2, 0, 1)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, loader, *box in CROPS:
        img = crop(loader, *box)
        save_image(img, OUT / f"{name}.png")
        print(f"{name}: {img.shape[2]}x{img.shape[1]}")


if __name__ == "__main__":
    main()
