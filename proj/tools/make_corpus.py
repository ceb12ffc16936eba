#!/usr/bin/env python3
"""Build the bundled natural-image corpora under data/.

Exports the photographic sample images that ship with scikit-image as 8-bit
grayscale PNGs:

  data/train/hr/  -- training corpus (>= 10k 32x32/stride-12 patches at x2)
  data/val/hr/    -- 10 validation images, disjoint from the training set

RGB sources are converted with the BT.601 luminance weights, matching the
loader in src/image_io.cpp.
"""
import argparse
import pathlib

import numpy as np
from PIL import Image
from skimage import data


def to_gray_u8(img):
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., :3].astype(np.float64)
        arr = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    arr = arr.astype(np.float64)
    if arr.max() > 255.0:  # 16-bit sources
        arr = arr * (255.0 / arr.max())
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


# name -> (loader, crop). Crops keep runtimes sane for the largest sources.
TRAIN = [
    ("camera", data.camera, None),
    ("astronaut", data.astronaut, None),
    ("coffee", data.coffee, None),
    ("chelsea", data.chelsea, None),
    ("coins", data.coins, None),
    ("moon", data.moon, None),
    ("rocket", data.rocket, None),
    ("motorcycle", data.stereo_motorcycle, None),
    ("ihc", data.immunohistochemistry, None),
    ("cell", data.cell, None),
]

VAL = [
    ("cat", data.cat, None),
    ("page", data.page, None),
    ("text", data.text, None),
    ("clock", data.clock, None),
    ("gravel", data.gravel, (0, 0, 256, 256)),
    ("brick", data.brick, (0, 0, 256, 256)),
    ("grass", data.grass, (0, 0, 256, 256)),
    ("hubble", data.hubble_deep_field, (0, 0, 320, 320)),
    ("retina", data.retina, (400, 400, 320, 320)),
    ("micro", data.microaneurysms, None),
]


def export(entries, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    total = 0
    for name, loader, crop in entries:
        img = loader()
        if isinstance(img, tuple):  # stereo pairs etc.
            img = img[0]
        gray = to_gray_u8(img)
        if crop is not None:
            r, c, h, w = crop
            gray = gray[r:r + h, c:c + w]
        Image.fromarray(gray, mode="L").save(outdir / f"{name}.png")
        h, w = gray.shape
        n = max(0, (h - 32) // 12 + 1) * max(0, (w - 32) // 12 + 1)
        total += n
        print(f"  {name}: {w}x{h} ({n} patches)")
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", help="output base directory")
    args = ap.parse_args()
    base = pathlib.Path(args.out)
    print("training corpus:")
    n = export(TRAIN, base / "train" / "hr")
    print(f"  total: {n} patch positions")
    print("validation corpus:")
    export(VAL, base / "val" / "hr")


if __name__ == "__main__":
    main()
