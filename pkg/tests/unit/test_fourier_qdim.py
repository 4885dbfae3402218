import numpy as np
import pytest

from qvmanifold.exceptions import InsufficientDataError, InvalidInputError
from qvmanifold.fourier_qdim import (
    FourierEstimate,
    default_cutoff,
    dirichlet_kernel,
    eigenfunctions,
    kernel_operator,
    qdim_estimate,
    reduced_operator,
    rescaled_time,
)
from qvmanifold.linalg_core import Eigensystem, InnerProductSpec, SubspaceBasis, gram_schmidt, subspace_distance
from qvmanifold.models import SpaceTimePanel
from qvmanifold.simulation import hjm_loadings, make_rng

UNIT_GRID = np.linspace(0.0, 1.0, 11)


def panel_from(values, t_grid=None, x_grid=UNIT_GRID):
    values = np.asarray(values, dtype=float)
    t_grid = np.linspace(0, 1, values.shape[0]) if t_grid is None else t_grid
    return SpaceTimePanel(t_grid=t_grid, x_grid=x_grid, values=values)


def three_plus_one_panel(seed, n_points=2000):
    """Three Brownian factors on Sobolev-orthonormal curves plus a slow smooth fourth factor"""
    t = np.linspace(0, 2 * np.pi, n_points)
    x = np.linspace(0, 5, 31)
    curves = gram_schmidt(hjm_loadings().sample(x), InnerProductSpec.sobolev(x)).vectors
    steps = make_rng(seed).standard_normal((n_points - 1, 3)) * np.sqrt(t[1] - t[0])
    brownian = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    factors = np.column_stack([brownian, np.sin(t)])
    return SpaceTimePanel(t_grid=t, x_grid=x, values=factors @ curves), curves


def estimate_with(values):
    return FourierEstimate(cutoff=1, n_steps=10, times=np.zeros(10), coefficients=np.zeros((3, len(values))),
                           kernel=Eigensystem(np.asarray(values, dtype=float), np.eye(len(values))))


def test_dirichlet_kernel_known_values():
    for M in (0, 1, 5, 999):
        assert dirichlet_kernel(0.0, M) == 1.0
        assert dirichlet_kernel(2 * np.pi, M) == 1.0
    assert dirichlet_kernel(np.pi, 1) == pytest.approx(-1 / 3)
    assert dirichlet_kernel(0.5, 0) == pytest.approx(1.0)


def test_dirichlet_kernel_is_vectorized_and_periodic():
    t = np.linspace(-7, 7, 57)
    values = dirichlet_kernel(t, 3)
    assert values.shape == t.shape
    np.testing.assert_allclose(values, dirichlet_kernel(t + 4 * np.pi, 3), atol=1e-9)
    assert np.all(values <= 1.0 + 1e-12)
    frequencies = np.arange(-3, 4)
    direct = np.exp(1j * np.outer(t, frequencies)).sum(axis=1).real / 7
    np.testing.assert_allclose(values, direct, atol=1e-10)


def test_dirichlet_kernel_custom_period():
    assert dirichlet_kernel(3.0, 2, period=3.0) == 1.0
    assert dirichlet_kernel(0.75, 1, period=1.5) == pytest.approx(-1 / 3)


def test_dirichlet_kernel_rejects_negative_cutoff():
    with pytest.raises(InvalidInputError):
        dirichlet_kernel(0.1, -1)


def test_time_rescaling_and_default_cutoff():
    np.testing.assert_allclose(rescaled_time(np.array([1.0, 1.5, 3.0])), [0, np.pi / 2, 2 * np.pi])
    assert default_cutoff(1999) == 999
    assert default_cutoff(2) == 1


def test_constant_panel_gives_zero_operator():
    est = reduced_operator(panel_from(np.tile(UNIT_GRID ** 2, (12, 1))))
    np.testing.assert_array_equal(est.q_bar, 0.0)
    assert qdim_estimate(est) == 0
    result = eigenfunctions(est, panel_from(np.tile(UNIT_GRID ** 2, (12, 1))))
    assert result.count == 0
    assert result.basis.dim == 0


def test_single_increment_panel():
    values = np.zeros((11, UNIT_GRID.size))
    values[4:] = UNIT_GRID ** 2
    panel = panel_from(values)
    est = reduced_operator(panel, M=3)
    c = InnerProductSpec.sobolev(UNIT_GRID).inner(UNIT_GRID ** 2, UNIT_GRID ** 2)
    t_k = rescaled_time(panel.t_grid)[3]
    m = np.arange(-3, 4)
    # Q̄[m, s] = c·exp(i(s - m)t_k)/(2M+1)
    expected = c * np.exp(-1j * np.subtract.outer(m, m) * t_k) / 7
    np.testing.assert_allclose(est.q_bar, expected, atol=1e-12)
    assert est.eigenvalues[0] == pytest.approx(c)
    np.testing.assert_allclose(est.eigenvalues[1:], 0.0, atol=1e-12)
    assert est.p_hat_eps == 1

    result = eigenfunctions(est, panel)
    assert result.count == 1
    increment = SubspaceBasis(UNIT_GRID ** 2, InnerProductSpec.sobolev(UNIT_GRID))
    assert subspace_distance(result.basis, increment) < 1e-8


def test_reduced_operator_is_hermitian_with_real_trace():
    rng = np.random.default_rng(1)
    panel = panel_from(rng.standard_normal((40, UNIT_GRID.size)).cumsum(axis=0))
    est = reduced_operator(panel)
    q_bar = est.q_bar
    assert q_bar.shape == (2 * est.cutoff + 1, 2 * est.cutoff + 1)
    np.testing.assert_allclose(q_bar, q_bar.conj().T, atol=1e-10 * np.abs(q_bar).max())
    coords = InnerProductSpec.sobolev(UNIT_GRID).coordinates(panel.increments())
    times = rescaled_time(panel.t_grid)[:-1]
    weights = dirichlet_kernel(np.subtract.outer(times, times), est.cutoff)
    trace = np.trace(q_bar)
    assert abs(trace.imag) <= 1e-10 * abs(trace.real)
    assert trace.real == pytest.approx(np.sum(weights * (coords @ coords.T)), rel=1e-10)
    assert np.all(est.eigenvalues >= 0)


def test_reduced_spectrum_matches_kernel_operator():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 1, 6)
    for _ in range(5):
        panel = panel_from(rng.standard_normal((11, 6)).cumsum(axis=0), x_grid=x)
        est = reduced_operator(panel)
        small = np.sort(np.linalg.eigvalsh(kernel_operator(panel)))[::-1]
        large = np.sort(np.linalg.eigvalsh(est.q_bar))[::-1]
        scale = small[0]
        np.testing.assert_allclose(large[:small.size], small, atol=1e-8 * scale)
        np.testing.assert_allclose(large[small.size:], 0.0, atol=1e-8 * scale)
        np.testing.assert_allclose(est.eigenvalues, small, atol=1e-8 * scale)


def test_single_brownian_factor_eigenvalue():
    hits = 0
    for seed in range(20):
        t = np.linspace(0, 1, 2001)
        b = np.concatenate([[0.0], np.cumsum(make_rng(seed).standard_normal(2000) * np.sqrt(1 / 2000))])
        est = reduced_operator(panel_from(np.outer(b, UNIT_GRID), t_grid=t))
        hits += abs(est.eigenvalues[0] - 1.0) < 0.15
    assert hits >= 16


def test_qdim_estimate_known_values():
    assert qdim_estimate(estimate_with([5.0, 2.0, 1e-9]), 0.01) == 2
    assert qdim_estimate(estimate_with([0.0, 0.0]), 0.01) == 0
    assert qdim_estimate(estimate_with([5.0, 2.0, 1e-9]), 0.3, relative=True) == 1
    assert qdim_estimate(estimate_with([5.0, 2.0, 0.5])) == 3
    with pytest.raises(InvalidInputError):
        qdim_estimate(estimate_with([1.0]), 0.0)


def test_three_dimensional_quadratic_variation():
    hits = 0
    for seed in range(10):
        panel, _ = three_plus_one_panel(seed)
        hits += reduced_operator(panel).p_hat_eps == 3
    assert hits >= 8


def test_qdim_is_robust_to_the_cutoff():
    panel, _ = three_plus_one_panel(3)
    full = reduced_operator(panel)
    half = reduced_operator(panel, M=full.cutoff // 2)
    assert qdim_estimate(full) == qdim_estimate(half) == 3


def test_eigenfunctions_span_the_brownian_curves():
    panel, curves = three_plus_one_panel(4)
    est = reduced_operator(panel)
    result = eigenfunctions(est, panel)
    ip = InnerProductSpec.sobolev(panel.x_grid)
    assert result.count == 3
    assert result.imaginary_share < 1e-6
    np.testing.assert_allclose(result.basis.gram(), np.eye(3), atol=1e-9)
    assert subspace_distance(result.basis, SubspaceBasis(curves[:3], ip)) < 0.15


def test_eigenfunctions_reject_foreign_panel():
    rng = np.random.default_rng(5)
    est = reduced_operator(panel_from(rng.standard_normal((20, 11)).cumsum(axis=0)))
    with pytest.raises(InvalidInputError):
        eigenfunctions(est, panel_from(rng.standard_normal((25, 11))))


def test_reduced_operator_input_checks():
    with pytest.raises(InsufficientDataError):
        reduced_operator(SpaceTimePanel(t_grid=np.array([0.0]), x_grid=UNIT_GRID, values=np.ones((1, 11))))
    with pytest.raises(InvalidInputError):
        reduced_operator(panel_from(np.ones((5, 11))), M=0)
