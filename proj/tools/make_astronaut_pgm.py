"""Write the 512x512 astronaut test image as an 8-bit binary PGM.

Usage: make_astronaut_pgm.py OUT.pgm
Luminance uses Y = 0.299 R + 0.587 G + 0.114 B, rounded to the nearest integer.
"""
import sys

import numpy as np
from skimage import data


def main():
    if len(sys.argv) != 2:
        sys.exit("usage: make_astronaut_pgm.py OUT.pgm")
    rgb = data.astronaut().astype(np.float64)
    y = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    img = np.clip(np.rint(y), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(sys.argv[1], "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


if __name__ == "__main__":
    main()
