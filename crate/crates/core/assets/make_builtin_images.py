"""Regenerates the bundled 64x64 photographs in the PNPK format.

camera (grayscale) and astronaut (RGB) come from scikit-image's data module;
both are public domain. Run from this directory:  python3 make_builtin_images.py
"""
import struct

import numpy as np
from skimage import data
from skimage.transform import resize


def write_pnpk(path, img):
    img = np.asarray(img, dtype="<f8")
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    planar = np.ascontiguousarray(np.transpose(img, (2, 0, 1)))
    with open(path, "wb") as f:
        f.write(b"PNPK")
        f.write(struct.pack("<III", h, w, c))
        f.write(planar.astype("<f8").tobytes())


def main():
    camera = resize(data.camera() / 255.0, (64, 64), anti_aliasing=True)
    write_pnpk("camera64.pnpk", np.clip(camera, 0.0, 1.0))
    astro = resize(data.astronaut() / 255.0, (64, 64, 3), anti_aliasing=True)
    write_pnpk("astronaut64.pnpk", np.clip(astro, 0.0, 1.0))


if __name__ == "__main__":
    main()
