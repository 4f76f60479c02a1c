"""Smooth synthetic images made of Gaussian blobs, shared by the scripts here."""
import numpy as np

from rigidreg.image_core import DiscreteImage


def blob_field(shape, centers, amps, sigma):
    grids = np.meshgrid(*[np.arange(n, dtype=float) for n in shape], indexing="ij")
    out = np.zeros(shape)
    for c, a in zip(centers, amps):
        r2 = sum((grids[k] - c[k]) ** 2 for k in range(len(shape)))
        out += a * np.exp(-r2 / (2 * sigma ** 2))
    return DiscreteImage(out)


def blob_pair(rng, shape, motion, n_blobs=6, sigma=2.0, spread=0.25):
    """Returns f, g with f(x) = g(motion(x)), both sampled from the same blobs."""
    c = (np.array(shape) - 1) / 2.0
    pts = [c + rng.uniform(-spread, spread, len(shape)) * np.array(shape) for _ in range(n_blobs)]
    amps = rng.uniform(0.3, 1.0, n_blobs)
    f = blob_field(shape, pts, amps, sigma)
    g = blob_field(shape, [motion.apply(p) for p in pts], amps, sigma)
    return f, g
