import math

import numpy as np
import pytest
from scipy import special

from helpers import random_links, well_posed_case
from orient3d.crb import (
    SingularInformationError,
    constrained_crb,
    constraint_basis,
    fim_bundle,
    measurement_fim,
    oeb,
    orientation_fim,
    orthogonality_constraints,
    orthogonality_jacobian,
)
from orient3d.geometry import EulerAngles, euler_to_rotation, random_rotation, vec
from orient3d.sim import reference_scenario, scenario_oeb


def euler_chart_bound(o, ue, bs, kappas, h=1e-6):
    """sqrt(trace(J (J^T I J)^-1 J^T)) with J = d vec(R) / d(alpha, beta, gamma) by central differences."""
    o = np.asarray(o, dtype=float)
    J = np.zeros((9, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[:, k] = (vec(euler_to_rotation(o + e)) - vec(euler_to_rotation(o - e))) / (2 * h)
    i_r = orientation_fim(euler_to_rotation(o), ue, bs, kappas)
    return math.sqrt(np.trace(J @ np.linalg.solve(J.T @ i_r @ J, J.T)))


def test_measurement_fim_zero():
    np.testing.assert_array_equal(measurement_fim(np.zeros(4)), np.zeros((4, 4)))


def test_measurement_fim_diagonal():
    F = measurement_fim([2.0, 2.0, 2.0, 2.0])
    np.testing.assert_allclose(np.diag(F), 2 * special.i1(2) / special.i0(2), rtol=1e-14)
    assert F[0, 0] == pytest.approx(1.3955, abs=1e-4)
    assert np.all(F[~np.eye(4, dtype=bool)] == 0)


def test_constraint_basis_identity():
    M = constraint_basis(np.eye(3))
    e1, e2, e3, z = np.eye(3)[0], np.eye(3)[1], np.eye(3)[2], np.zeros(3)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(M[:, 0], s * np.concatenate([-e3, z, e1]))
    np.testing.assert_allclose(M[:, 1], s * np.concatenate([z, -e3, e2]))
    np.testing.assert_allclose(M[:, 2], s * np.concatenate([e2, -e1, z]))


def test_constraint_basis_orthonormal_and_null(rng):
    for _ in range(100):
        R = random_rotation(rng)
        M = constraint_basis(R)
        assert np.abs(M.T @ M - np.eye(3)).max() < 1e-14
        assert np.abs(orthogonality_jacobian(R) @ M).max() < 1e-12


def test_constraint_jacobian_finite_differences(rng):
    R = random_rotation(rng)
    r = vec(R)
    h = 1e-6
    fd = np.zeros((6, 9))
    for k in range(9):
        e = np.zeros(9)
        e[k] = h
        fd[:, k] = (
            orthogonality_constraints((r + e).reshape(3, 3, order="F"))
            - orthogonality_constraints((r - e).reshape(3, 3, order="F"))
        ) / (2 * h)
    np.testing.assert_allclose(orthogonality_jacobian(R), fd, atol=1e-9)


def _bundle(rng, n_bs=2):
    R, ue, bs = well_posed_case(rng, n_bs)
    kappas = rng.uniform(1, 100, 2 * n_bs)
    return R, ue, bs, kappas, fim_bundle(R, ue, bs, kappas)


def test_crb_homogeneity(rng):
    _, _, _, _, b = _bundle(rng)
    c = 3.7
    np.testing.assert_allclose(constrained_crb(c * b.i_r, b.m_basis), b.crb / c, rtol=1e-10)


def test_crb_symmetric_psd_rank_three(rng):
    for _ in range(20):
        *_, b = _bundle(rng, 3)
        np.testing.assert_allclose(b.crb, b.crb.T, atol=1e-15)
        eig = np.linalg.eigvalsh(b.crb)
        assert eig.min() > -1e-12 * eig.max()
        assert np.linalg.matrix_rank(b.crb, tol=1e-10 * eig.max()) <= 3


def test_crb_basis_scale_invariance(rng):
    *_, b = _bundle(rng)
    np.testing.assert_allclose(constrained_crb(b.i_r, -2.5 * b.m_basis), b.crb, rtol=1e-10, atol=1e-14)


def test_singular_information():
    with pytest.raises(SingularInformationError) as info:
        constrained_crb(np.zeros((9, 9)), constraint_basis(np.eye(3)))
    assert info.value.min_eigenvalue == 0.0
    b = fim_bundle(np.eye(3), [0, 0, 0], [[1, 1, 1], [2, 2, 2]], np.ones(4))
    assert b.singular and b.crb is None


def test_bundle_shapes(rng):
    *_, b = _bundle(rng, 3)
    assert b.i_theta.shape == (6, 6)
    assert b.upsilon.shape == (9, 6)
    assert b.i_r.shape == (9, 9) and b.m_basis.shape == (9, 3)
    assert b.oeb >= 0 and b.min_eigenvalue > 0


def test_oeb_vanishes_with_infinite_concentration(rng):
    R, ue, bs = well_posed_case(rng)
    values = [oeb(R, ue, bs, np.full(4, k)) for k in (1e2, 1e4, 1e6, 1e8)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-3


def test_oeb_matches_euler_chart(rng):
    for _ in range(100):
        o = (rng.uniform(-math.pi, math.pi), rng.uniform(-1.4, 1.4), rng.uniform(-math.pi, math.pi))
        R = euler_to_rotation(o)
        ue, bs = random_links(rng, int(rng.integers(2, 4)))
        kappas = rng.uniform(1, 200, 2 * len(bs))
        assert oeb(R, ue, bs, kappas) == pytest.approx(euler_chart_bound(o, ue, bs, kappas), rel=1e-6)


def test_oeb_permutation_invariant(rng):
    R, ue, bs = well_posed_case(rng, 3)
    kappas = rng.uniform(1, 50, 6)
    perm = [2, 0, 1]
    k_perm = kappas.reshape(3, 2)[perm].ravel()
    assert oeb(R, ue, bs[perm], k_perm) == pytest.approx(oeb(R, ue, bs, kappas), rel=1e-12)


def test_extra_bs_never_hurts(rng):
    for _ in range(100):
        R, ue, bs = well_posed_case(rng, 3)
        kappas = rng.uniform(1, 50, 6)
        assert oeb(R, ue, bs, kappas) <= oeb(R, ue, bs[:2], kappas[:4]) * (1 + 1e-12)


def test_oeb_inverse_sqrt_snr_scaling():
    lo, hi = scenario_oeb(reference_scenario(20.0)), scenario_oeb(reference_scenario(30.0))
    slope = math.log10(hi / lo) / 1.0
    assert slope == pytest.approx(-0.5, rel=0.05)


def test_singular_gradient_reported_as_infinite():
    assert oeb(np.eye(3), [0, 0, 0], [[0, 0, 5], [1, 0, 0]], np.ones(4)) == math.inf


def test_reference_peak_exceeds_one():
    sc = reference_scenario(-10.0, orientation=EulerAngles(math.pi / 2, -math.pi / 4, math.pi / 4))
    assert scenario_oeb(sc) > 1.0
