import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import blob_field, blob_image
from rigidreg.image_core import DiscreteImage, l2_norm
from rigidreg.lipschitz import (BandIntegrals, LipschitzSet, default_band_edges, jacobian_spectrum, level_cutoff,
                                lip_rotation_2d, lip_rotation_3d, lip_symmetry, lip_translation, max_abs_cos,
                                max_abs_sin_half, registration_set, spectra_for)
from rigidreg.spectral import forward_dft
from rigidreg.target import FrequencyEvaluator, RigidMotion


def centred_transform(img, z, c):
    """``T^d sum_i g_i exp(-2 pi i z.(x_i - c))`` straight from the samples."""
    x = img.world_coords().reshape(-1, img.dims) - c
    return img.period ** img.dims * np.exp(-2j * np.pi * np.atleast_2d(z) @ x.T) @ img.samples.ravel()


def test_jacobian_matches_central_differences():
    g = blob_image(np.random.default_rng(0), (10, 9))
    c = g.center() + np.array([0.3, -0.4])
    J = jacobian_spectrum(g, 2, c)
    z = J.zgrid()
    rng = np.random.default_rng(1)
    picks = [tuple(rng.integers(0, n) for n in J.extents) for _ in range(12)]
    h = 1e-5
    for p in picks:
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (centred_transform(g, z[p] + e, c) - centred_transform(g, z[p] - e, c))[0] / (2 * h)
            assert abs(J.components[k][p] - fd) <= 1e-4 * max(abs(fd), 1e-3 * np.abs(J.components).max())


def test_jacobian_of_gaussian():
    s, n = 2.0, 24
    c = np.array([(n - 1) / 2, (n - 1) / 2])
    g = blob_field((n, n), [c], [1.0], s)
    J = jacobian_spectrum(g, 2, c)
    z = J.zgrid()
    # transform of exp(-|x|^2 / 2 s^2) is 2 pi s^2 exp(-2 pi^2 s^2 |z|^2); differentiate in z
    gt = 2 * math.pi * s * s * np.exp(-2 * math.pi ** 2 * s * s * np.sum(z ** 2, axis=-1))
    for k in range(2):
        want = -4 * math.pi ** 2 * s * s * z[..., k] * gt
        assert np.max(np.abs(J.components[k] - want)) < 1e-6 * np.max(np.abs(want))


def test_jacobian_norm_is_largest_singular_value():
    g = blob_image(np.random.default_rng(2), (6, 6), margin=1)
    J = jacobian_spectrum(g, 2)
    for p in [(0, 1), (3, 5), (7, 2)]:
        M = np.stack([np.real(J.components[:, p[0], p[1]]), np.imag(J.components[:, p[0], p[1]])])
        assert J.norm[p] == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=1e-12)


def test_translation_constant_cases():
    f, g = blob_image(np.random.default_rng(3), (12, 12)), blob_image(np.random.default_rng(4), (12, 12))
    F, G = forward_dft(f, 2), forward_dft(g, 2)
    assert lip_translation(F.scaled(0.0), G, default_band_edges(2, 1.0)) == 0.0
    r_max = math.sqrt(2) / 2
    one = lip_translation(F, G, [0.0, r_max])
    ef = float(np.sum(F.power())) * F.cell_volume
    eg = float(np.sum(G.power())) * G.cell_volume
    assert one == pytest.approx(2 * math.pi * r_max * math.sqrt(ef * eg), rel=1e-12)
    assert one == pytest.approx(2 * math.pi * r_max * l2_norm(f) * l2_norm(g), rel=1e-9)


def test_rotation_constant_radial_image():
    n, s = 24, 2.0
    c = np.array([(n - 1) / 2] * 2)
    g = blob_field((n, n), [c], [1.0], s)
    f = blob_image(np.random.default_rng(5), (n, n))
    F, G, J = spectra_for(f, g, 2, c)
    edges = default_band_edges(2, 1.0)
    L = lip_rotation_2d(F, J, edges)
    assert L < 1e-6 * l2_norm(f) * l2_norm(g) * edges[-1]
    assert lip_rotation_2d(F.scaled(0.0), J, edges) == 0.0


def test_angular_factors():
    assert max_abs_sin_half(0.0, 0.0) == 0.0
    assert max_abs_sin_half(-0.5, 3.5) == 1.0
    assert max_abs_sin_half(0.2, 0.4) == pytest.approx(math.sin(0.2))
    assert max_abs_cos(math.pi / 2, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert max_abs_cos(-0.1, 0.2) == 1.0
    assert max_abs_cos(0.3, 1.0) == pytest.approx(math.cos(0.3))


def test_rotation_3d_degenerate_boxes():
    rng = np.random.default_rng(6)
    f, g = blob_image(rng, (8, 8, 8), sigma=1.5), blob_image(rng, (8, 8, 8), sigma=1.5)
    F, G, J = spectra_for(f, g, 2)
    edges = default_band_edges(3, 1.0, 16)
    zero_theta = lip_rotation_3d(F, J, edges, {"theta": (0.0, 0.0), "psi": (-1.0, 1.0)})
    assert zero_theta["psi"] == 0.0 and zero_theta["phi"] == 0.0 and zero_theta["theta"] > 0
    pole = lip_rotation_3d(F, J, edges, {"theta": (-1.0, 1.0), "psi": (math.pi / 2, math.pi / 2)})
    assert pole["phi"] == pytest.approx(0.0, abs=1e-12 * pole["theta"])


def test_symmetry_constants_cases():
    rng = np.random.default_rng(7)
    f = blob_image(rng, (8, 8, 8), sigma=1.5)
    F, _, J = spectra_for(f, f, 2)
    edges = default_band_edges(3, 1.0, 16)
    box = {"phi": (-1, 1), "psi": (math.pi / 2, math.pi / 2), "offset": (-2.0, 3.0)}
    out = lip_symmetry(F, J, edges, box, 3)
    assert out["phi"] == pytest.approx(0.0, abs=1e-12 * out["psi"])
    zero = lip_symmetry(F.scaled(0.0), jacobian_spectrum(f.scaled(0.0), 2), edges, box, 3)
    assert all(v == 0.0 for v in zero.values())
    f2 = blob_image(rng, (12, 12))
    F2, _, J2 = spectra_for(f2, f2, 2)
    out2 = lip_symmetry(F2, J2, default_band_edges(2, 1.0), {"phi": (0, 1), "offset": (-1.0, 1.0)}, 2)
    assert set(out2) == {"offset", "phi"} and out2["offset"] > 0


def test_constants_shrink_with_decimation_and_refinement():
    rng = np.random.default_rng(8)
    f, g = blob_image(rng, (16, 16)), blob_image(rng, (16, 16))
    F, G, J = spectra_for(f, g, 2)
    edges = default_band_edges(2, 1.0, 32)
    sets = [registration_set(F, G, J, edges, l, 2 ** l) for l in range(4)]
    for a, b in zip(sets, sets[1:]):
        assert b.translation <= a.translation and b.rotation <= a.rotation
    assert level_cutoff(1, 1.0) == math.inf
    coarse = default_band_edges(2, 1.0, 4)
    fine = default_band_edges(2, 1.0, 16)
    assert lip_translation(F, G, fine) <= lip_translation(F, G, coarse)
    assert lip_rotation_2d(F, J, fine) <= lip_rotation_2d(F, J, coarse)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_constants_scale_linearly(a, b):
    rng = np.random.default_rng(9)
    f, g = blob_image(rng, (10, 10)), blob_image(rng, (10, 10))
    F, G, J = spectra_for(f, g, 2)
    F2, G2, J2 = spectra_for(f.scaled(a), g.scaled(b), 2)
    edges = default_band_edges(2, 1.0)
    assert lip_translation(F2, G2, edges) == pytest.approx(a * b * lip_translation(F, G, edges), rel=1e-10)
    assert lip_rotation_2d(F2, J2, edges) == pytest.approx(a * b * lip_rotation_2d(F, J, edges), rel=1e-10)


def test_negative_constant_rejected():
    with pytest.raises(ValueError):
        LipschitzSet(0, 1, 2, -1.0, 0.0, np.array([0.0, 1.0]))


def test_sampled_quotients_small_2d():
    rng = np.random.default_rng(10)
    f, g = blob_image(rng, (16, 16)), blob_image(rng, (16, 16))
    c = f.center()
    F, G, J = spectra_for(f, g, 2, c)
    edges = default_band_edges(2, 1.0)
    Lt, Lr = lip_translation(F, G, edges), lip_rotation_2d(F, J, edges)
    ev = FrequencyEvaluator(forward_dft(f, 4), forward_dft(g, 4))
    for _ in range(40):
        th, t = rng.uniform(-math.pi, math.pi), rng.uniform(-3, 3, 2)
        dt, dth = rng.normal(size=2) * 0.5, rng.normal() * 0.3
        q0 = ev(RigidMotion.planar(th, t, c)).value
        assert abs(ev(RigidMotion.planar(th, t + dt, c)).value - q0) <= Lt * np.linalg.norm(dt)
        assert abs(ev(RigidMotion.planar(th + dth, t, c)).value - q0) <= Lr * abs(dth)
    bands = BandIntegrals(F, G, J, edges)
    assert bands.energy_f.sum() == pytest.approx(l2_norm(f) ** 2, rel=1e-9)
