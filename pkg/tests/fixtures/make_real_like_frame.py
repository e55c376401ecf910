"""Regenerate the checked-in 'real-like' microscopy frame.

Eight sources of graded brightness on a 64x64 grid with a sharp PSF
(b = 400), a constant intensity offset, mild sensor noise, and 16-bit
quantization. The noise level is chosen so the singular-value drop after
the eighth value stays well clear of the noisy rank tolerance (1e-2).

Run from the repository root:  python tests/fixtures/make_real_like_frame.py
"""

from pathlib import Path

import numpy as np

from pronypencil import ParameterSet, PSFModel, add_noise, render_image
from pronypencil.microscopy import ImageGrid, write_image_pgm
from pronypencil.model import write_params_csv

HERE = Path(__file__).parent

P = 64
B = 400.0
BACKGROUND_FRACTION = 0.08
SNR = 100.0
PLACEMENT_SEED = 20260809
NOISE_SEED = 7
MIN_TORUS_SEP = 0.11


def draw_locations(rng):
    while True:
        t = rng.random((8, 2)) * 0.9 + 0.05
        delta = np.abs(t[:, None, :] - t[None, :, :])
        delta = np.minimum(delta, 1 - delta)
        dist = np.sqrt((delta ** 2).sum(-1)) + np.eye(8)
        if dist.min() > MIN_TORUS_SEP:
            return t


def main():
    rng = np.random.default_rng(PLACEMENT_SEED)
    t = draw_locations(rng)
    amps = np.array([2.0, 1.7, 1.5, 1.3, 1.1, 0.9, 0.75, 0.6])
    params = ParameterSet(d=2, M=8, t=t, c=amps.astype(complex))
    image = render_image(params, PSFModel(b=B, d=2), P)
    offset = BACKGROUND_FRACTION * image.pixels.max()
    frame = ImageGrid(2, P, image.pixels + offset)
    frame = add_noise(frame, SNR, seed=NOISE_SEED)
    frame = ImageGrid(2, P, np.clip(frame.pixels, 0, None))
    write_image_pgm(HERE / "realframe_m8.pgm", frame, maxval=65535, binary=True)
    write_params_csv(HERE / "realframe_m8_truth.csv", params)
    print(f"wrote realframe_m8.pgm (P={P}, b={B}) and realframe_m8_truth.csv")


if __name__ == "__main__":
    main()
