#!/usr/bin/env python3
"""Write a synthetic (image, labels) subject pair for demos and smoke tests.

The label map is the package's built-in toy phantom (nested shells covering
all seven tissue labels); the intensity volume separates the tissues well
enough for EM subclass fitting to find structure.
"""

import argparse
import os

import numpy as np

from drsynth.labels import toy_label_map
from drsynth.nifti import write_nifti
from drsynth.volume import Volume3D


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--subject", default="demo", help="subject id (file stem)")
    ap.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64), metavar=("NX", "NY", "NZ"))
    ap.add_argument("--spacing", type=float, nargs=3, default=(1.0, 1.0, 1.0), metavar=("SX", "SY", "SZ"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    labels = toy_label_map(tuple(args.dims), tuple(args.spacing))
    rng = np.random.default_rng(args.seed)
    intensity = labels.data.astype(np.float32) * 11.0
    intensity += rng.random(labels.dims, dtype=np.float32)
    image = Volume3D(intensity, labels.spacing, labels.affine)

    os.makedirs(args.out, exist_ok=True)
    lab_path = os.path.join(args.out, f"{args.subject}_labels.nii.gz")
    img_path = os.path.join(args.out, f"{args.subject}_image.nii.gz")
    write_nifti(labels, lab_path)
    write_nifti(image, img_path)
    print(f"wrote {img_path}")
    print(f"wrote {lab_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
