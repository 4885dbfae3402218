import numpy as np
import pandas as pd
import pytest

from qvmanifold.exceptions import InvalidInputError, ShapeError
from qvmanifold.linalg_core import InnerProductSpec, SubspaceBasis, gram_schmidt, subspace_distance
from qvmanifold.models import MultiPath, SpaceTimePanel
from qvmanifold.qv_estimation import realized_qv
from qvmanifold.simulation import (
    NoiseSpec,
    equidistant_grid,
    fdr_panel_7_1,
    hjm_loadings,
    hjm_panel,
    make_rng,
    models_7_2,
    space_grid,
)
from qvmanifold.spde_manifold import (
    PipelineConfig,
    distance_trend,
    dynamic_distance,
    estimate_loadings,
    estimate_manifold,
    factor_qv_matrix,
    hs_energy,
    prepare_panel,
    split_manifold,
)

T_GRID = equidistant_grid(2 * np.pi, 2000)
X_GRID = space_grid(31, (0.0, 5.0))
SOBOLEV = InnerProductSpec.sobolev(X_GRID)


def three_plus_one_panel(seed):
    """Three Brownian factors on Sobolev-orthonormal curves plus the smooth factor sin(t)"""
    curves = gram_schmidt(hjm_loadings().sample(X_GRID), SOBOLEV).vectors
    steps = make_rng(seed).standard_normal((T_GRID.size - 1, 3)) * np.sqrt(T_GRID[1] - T_GRID[0])
    factors = np.column_stack([np.vstack([np.zeros(3), np.cumsum(steps, axis=0)]), np.sin(T_GRID)])
    panel = SpaceTimePanel(t_grid=T_GRID, x_grid=X_GRID, values=factors @ curves,
                           latent=MultiPath(T_GRID, factors))
    return panel, curves


def test_factor_qv_matrix_of_constant_paths():
    q = factor_qv_matrix(np.ones((50, 3)))
    np.testing.assert_array_equal(q.matrix, np.zeros((3, 3)))


def test_factor_qv_matrix_of_scaled_brownian_motion():
    path = MultiPath(T_GRID, np.cumsum(make_rng(1).standard_normal(T_GRID.size)) * 0.3)
    expected = realized_qv(path).matrix
    np.testing.assert_allclose(factor_qv_matrix(path.values[:, 0]).matrix, expected, rtol=1e-12)
    np.testing.assert_allclose(factor_qv_matrix(path).matrix, expected, rtol=1e-12)


def test_factor_qv_matrix_drift_column():
    t = equidistant_grid(1.0, 2001)
    hits = 0
    for seed in range(20):
        b = np.concatenate([[0.0], np.cumsum(make_rng(seed).standard_normal(2000) * np.sqrt(1 / 2000))])
        q = factor_qv_matrix(np.column_stack([b, 2.0 * t]), horizon=1.0)
        hits += q.matrix[1, 1] / q.trace < 0.02 and abs(q.matrix[0, 1]) / q.trace < 0.02
    assert hits == 20


def test_estimate_loadings_of_rank_one_panel():
    t = np.linspace(0, 1, 40)
    y = np.cos(3 * t)
    y /= np.linalg.norm(y)
    g = np.sin(X_GRID)
    panel = SpaceTimePanel(t_grid=t, x_grid=X_GRID, values=np.outer(y, g))
    np.testing.assert_allclose(estimate_loadings(panel, y)[0], np.sqrt(panel.rho) * g, atol=1e-12)


def test_estimate_loadings_of_zero_panel():
    panel = SpaceTimePanel(t_grid=np.linspace(0, 1, 10), x_grid=X_GRID, values=np.zeros((10, 31)))
    eigvecs = np.linalg.qr(np.random.default_rng(0).standard_normal((10, 2)))[0]
    np.testing.assert_array_equal(estimate_loadings(panel, eigvecs), np.zeros((2, 31)))


def test_estimate_loadings_shape_mismatch():
    panel = SpaceTimePanel(t_grid=np.linspace(0, 1, 10), x_grid=X_GRID, values=np.ones((10, 31)))
    with pytest.raises(ShapeError):
        estimate_loadings(panel, np.ones(9))


def test_noiseless_loadings_span_the_true_curves():
    panel = hjm_panel(T_GRID, X_GRID, make_rng(2))
    estimate = split_manifold(panel, 4)
    truth = SubspaceBasis(hjm_loadings().sample(X_GRID), SOBOLEV)
    assert subspace_distance(SubspaceBasis(estimate.phi_hat, SOBOLEV), truth) < 0.05
    assert subspace_distance(estimate.manifold_basis(), truth) < 0.05


def test_rotation_identities():
    panel, _ = three_plus_one_panel(3)
    estimate = split_manifold(panel, 4, eps_rel=0.01)
    l_hat = estimate.l_hat
    np.testing.assert_allclose(l_hat @ l_hat.T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(estimate.z_paths.values, estimate.fit.y_hat @ l_hat.T)
    z_qv = realized_qv(estimate.z_paths).matrix
    np.testing.assert_allclose(np.diag(z_qv), estimate.theta, rtol=1e-12, atol=1e-12 * estimate.y_qv.trace)
    off_diagonal = z_qv - np.diag(np.diag(z_qv))
    assert np.abs(off_diagonal).max() <= 1e-12 * estimate.y_qv.trace
    assert np.sum(estimate.theta) == pytest.approx(estimate.y_qv.trace, rel=1e-12)
    assert np.all(np.diff(estimate.theta) <= 0)
    np.testing.assert_allclose(estimate.rotated_loadings, l_hat @ estimate.phi_hat)


def test_gram_schmidt_commutes_with_the_estimated_rotation():
    panel, _ = three_plus_one_panel(4)
    estimate = split_manifold(panel, 4, eps_rel=0.01)
    euclidean = InnerProductSpec.euclidean()
    coefficients = np.random.default_rng(4).standard_normal((3, 4))
    rotated_first = gram_schmidt(coefficients @ estimate.l_hat.T, euclidean).vectors
    rotated_after = gram_schmidt(coefficients, euclidean).vectors @ estimate.l_hat.T
    np.testing.assert_allclose(rotated_first, rotated_after, atol=1e-9)


def test_split_is_complementary():
    panel, _ = three_plus_one_panel(5)
    estimate = split_manifold(panel, 4, eps_rel=0.01, p_hat=2)
    assert estimate.q_space.dim == 2
    assert estimate.n_space.dim == 2
    joint = np.vstack([estimate.q_space.vectors, estimate.n_space.vectors])
    gram = SOBOLEV.gram(joint)
    assert np.linalg.matrix_rank(gram, tol=1e-8 * np.trace(gram)) == 4
    rotated = estimate.rotated_loadings
    assert subspace_distance(estimate.q_space, SubspaceBasis(rotated[:2], SOBOLEV)) < 1e-8
    assert subspace_distance(estimate.n_space, SubspaceBasis(rotated[2:], SOBOLEV)) < 1e-8
    np.testing.assert_allclose(estimate.q_space.gram(), np.eye(2), atol=1e-9)


def test_split_recovers_quadratic_variation_space():
    hits = 0
    for seed in range(10):
        panel, curves = three_plus_one_panel(seed)
        estimate = split_manifold(panel, 4, eps_rel=0.01)
        if estimate.p_hat != 3 or estimate.n_space.dim != 1:
            continue
        q_distance = subspace_distance(estimate.q_space, SubspaceBasis(curves[:3], SOBOLEV))
        v_distance = subspace_distance(estimate.manifold_basis(), SubspaceBasis(curves, SOBOLEV))
        hits += q_distance < 0.1 and v_distance < 0.1
    assert hits >= 8


def test_split_through_the_fourier_route():
    panel, _ = three_plus_one_panel(6)
    estimate = split_manifold(panel, 4, qdim_route='fourier')
    assert estimate.qdim_route == 'fourier'
    assert estimate.p_hat == 3
    assert estimate.q_space.dim == 3


def test_split_caps_p_hat_at_d_hat():
    panel, _ = three_plus_one_panel(7)
    estimate = split_manifold(panel, 2, qdim_route='fourier')
    assert estimate.p_hat == 2
    assert estimate.n_space.dim == 0


def test_split_rejects_unknown_route():
    panel, _ = three_plus_one_panel(8)
    with pytest.raises(InvalidInputError):
        split_manifold(panel, 4, qdim_route='spectral')


def test_hs_energy_known_values():
    assert hs_energy([3.0, 4.0]) == 25.0
    assert hs_energy(np.zeros(3)) == 0.0


def test_hs_energy_matches_normalized_latent_qv():
    panel, _ = three_plus_one_panel(9)
    estimate = split_manifold(panel, 4)
    z = panel.latent.values
    gram = panel.rho * z.T @ z
    values, vectors = np.linalg.eigh(gram)
    normalized = z @ vectors @ np.diag(values ** -0.5) @ vectors.T
    oracle = realized_qv(MultiPath(T_GRID, normalized)).eigenvalues
    assert hs_energy(estimate.theta) == pytest.approx(np.sum(oracle ** 2), rel=1e-6)
    assert estimate.diagnostics['hs_energy'] == pytest.approx(hs_energy(estimate.theta))


def test_manifold_tables():
    panel, _ = three_plus_one_panel(10)
    estimate = split_manifold(panel, 4, eps_rel=0.01)
    table = estimate.table()
    assert list(table.columns) == ['component', 'theta', 'eta', 'variance_factor_share']
    assert list(table['component']) == [1, 2, 3, 4]
    assert table['eta'].iloc[-1] == pytest.approx(1.0)
    assert np.all(np.diff(table['variance_factor_share']) >= 0)
    summary = estimate.to_dict()
    assert summary['dim_q'] + summary['dim_n'] == 4
    assert summary['diagnostics']['noise_increment_energy'] >= 0


def test_qv_and_variance_leading_factors_on_model_u():
    rotated_hits = 0
    variance_hits = 0
    for seed in range(20):
        estimate = split_manifold(models_7_2(T_GRID, X_GRID, make_rng(seed))['U'], 2)
        rotated_hits += estimate.qv_shares()[0] > 0.75
        variance_hits += estimate.variance_factor_qv_shares()[0] > 0.05
    assert rotated_hits >= 16
    assert variance_hits >= 18


def test_fdr_panel_concentrates_qv_in_the_leading_rotated_factor():
    d_hits = 0
    share_hits = 0
    for seed in range(8):
        estimate = estimate_manifold(fdr_panel_7_1(T_GRID, X_GRID, make_rng(seed)))
        d_hits += estimate.d_hat == 4
        share_hits += estimate.qv_shares()[0] > 0.5 and estimate.variance_factor_qv_shares()[0] < 0.15
    assert d_hits >= 7
    assert share_hits >= 7


def test_fdr_panel_split_with_three_volatility_directions():
    truth = hjm_loadings().sample(X_GRID)
    q_hits = 0
    fourier_hits = 0
    for seed in range(6):
        panel = prepare_panel(fdr_panel_7_1(T_GRID, X_GRID, make_rng(seed)), PipelineConfig())
        estimate = split_manifold(panel, 4, p_hat=3)
        assert estimate.q_space.dim == 3
        assert subspace_distance(estimate.manifold_basis(), SubspaceBasis(truth, SOBOLEV)) < 1e-4
        q_hits += subspace_distance(estimate.q_space, SubspaceBasis(truth[:3], SOBOLEV)) < 0.05
        fourier_hits += split_manifold(panel, 4, qdim_route='fourier').p_hat >= 3
    assert q_hits >= 3
    assert fourier_hits >= 4


def test_prepare_panel_demeans_without_phi():
    panel, _ = three_plus_one_panel(11)
    prepared = prepare_panel(panel, PipelineConfig())
    assert prepared.demeaned
    np.testing.assert_allclose(prepared.values.mean(axis=0), 0.0, atol=1e-12)
    assert prepare_panel(panel, PipelineConfig(demean=False)) is panel
    with_phi = hjm_panel(T_GRID, X_GRID, make_rng(11))
    assert prepare_panel(with_phi, PipelineConfig()) is with_phi


def test_estimate_manifold_picks_d_hat():
    panel = hjm_panel(T_GRID, X_GRID, make_rng(12))
    estimate = estimate_manifold(panel, PipelineConfig(kmax=8))
    assert estimate.d_hat == 4
    assert 'pc_table' in estimate.diagnostics
    overridden = estimate_manifold(panel, PipelineConfig(d_hat=3))
    assert overridden.d_hat == 3
    assert 'pc_table' not in overridden.diagnostics


def test_pipeline_config_validation():
    for kwargs in ({'kmax': 0}, {'penalty': 'aic'}, {'qdim_route': 'other'}, {'d_hat': 0}):
        with pytest.raises(InvalidInputError):
            PipelineConfig(**kwargs)


def test_dynamic_distance_without_noise():
    panel = hjm_panel(T_GRID, X_GRID, make_rng(13))
    lags = [0] + list(range(5, 251, 5))
    frame = dynamic_distance(panel, lags, PipelineConfig(n_jobs=2))
    assert list(frame['lag']) == lags
    assert frame['distance'].iloc[0] == 0.0
    assert frame['distance'].max() < 1e-4


def test_dynamic_distance_with_noise():
    panel = hjm_panel(T_GRID, X_GRID, make_rng(14), NoiseSpec('sine'))
    frame = dynamic_distance(panel, list(range(0, 251, 50)), PipelineConfig(d_hat=4, n_jobs=2))
    distances = frame['distance'].to_numpy()
    assert distances[0] == 0.0
    assert np.all((distances >= 0) & (distances <= 1))
    assert np.any(distances[1:] > 0)


def test_dynamic_distance_grows_with_the_lag_under_noise():
    lags = list(range(5, 251, 5))
    trends = []
    for seed in range(6):
        panel = hjm_panel(T_GRID, X_GRID, make_rng(seed), NoiseSpec('sine'))
        trends.append(distance_trend(dynamic_distance(panel, lags, PipelineConfig(d_hat=4, n_jobs=2))))
    assert sum(rho is not None and rho > 0 for rho in trends) >= 4


def test_distance_trend_known_values():
    series = pd.DataFrame({'lag': [0, 5, 10, 15], 'distance': [0.0, 0.1, 0.3, 0.2]})
    assert distance_trend(series) == pytest.approx(0.5)
    assert distance_trend(series.iloc[:3]) is None
    constant = pd.DataFrame({'lag': [5, 10, 15], 'distance': [0.2, 0.2, 0.2]})
    assert distance_trend(constant) is None


def test_dynamic_distance_rejects_bad_lags():
    panel, _ = three_plus_one_panel(15)
    for lag in (-1, panel.n_steps):
        with pytest.raises(InvalidInputError):
            dynamic_distance(panel, [lag])
