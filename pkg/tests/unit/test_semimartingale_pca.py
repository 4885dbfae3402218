import numpy as np
import pytest

from qvmanifold.exceptions import DegenerateSpectrumError, ShapeError
from qvmanifold.linalg_core import InnerProductSpec, SubspaceBasis, subspace_distance
from qvmanifold.models import MultiPath
from qvmanifold.qv_estimation import qv_quadratic_form
from qvmanifold.semimartingale_pca import explained_qv_ratios, ols_project, pca_split
from qvmanifold.simulation import equidistant_grid, euler_maruyama, make_rng, model_7_1, model_toy_drift

FOUR_FACTOR_GRID = equidistant_grid(2 * np.pi, 2000)


def four_factor_split(seed, eps_rel=0.01):
    return pca_split(euler_maruyama(model_7_1(), FOUR_FACTOR_GRID, make_rng(seed)), eps_rel)


def test_pca_split_diagonal_case():
    t = np.linspace(0, 1, 2001)
    b = make_rng(0).standard_normal(2000).cumsum() * np.sqrt(1 / 2000)
    path = MultiPath(t, np.column_stack([np.concatenate([[0.0], b]), 1e-3 * t]))
    split = pca_split(path, 0.01)
    assert split.p_hat == 1
    np.testing.assert_allclose(np.abs(split.rotation), np.eye(2), atol=1e-4)
    assert list(split.w_indices) == [0]
    assert list(split.d_indices) == [1]


def test_pca_split_structure():
    split = four_factor_split(1)
    np.testing.assert_allclose(split.rotation @ split.rotation.T, np.eye(4), atol=1e-10)
    path = euler_maruyama(model_7_1(), FOUR_FACTOR_GRID, make_rng(1))
    np.testing.assert_array_equal(split.j_paths.values, path.values @ split.rotation.T)
    component_qv = split.component_qv()
    assert np.all(np.diff(component_qv) <= 1e-8 * split.qv.trace)
    assert np.sum(component_qv) == pytest.approx(split.qv.trace, rel=1e-10)
    assert np.all(component_qv[split.p_hat:] <= split.eps_rel * split.qv.trace)


def test_toy_drift_direction():
    t = equidistant_grid(1.0, 2001)
    kernel = SubspaceBasis(np.array([[1.0, -1.0]]) / np.sqrt(2), InnerProductSpec.euclidean())
    hits = 0
    for seed in range(40):
        split = pca_split(euler_maruyama(model_toy_drift(), t, make_rng(seed)))
        estimated = SubspaceBasis(split.d_basis(), InnerProductSpec.euclidean())
        hits += split.p_hat == 1 and subspace_distance(estimated, kernel) < 0.05
    assert hits >= 36


def test_four_factor_model_split():
    p_hits = eta_hits = flat_hits = 0
    for seed in range(20):
        split = four_factor_split(seed)
        p_hits += split.p_hat == 3
        eta_hits += explained_qv_ratios(split.eigenvalues)[2] > 0.98
        flat_hits += split.component_qv()[3] / split.qv.trace < 0.01
    assert p_hits >= 16
    assert eta_hits >= 18
    assert flat_hits >= 18


def test_explained_qv_ratios_known_values():
    np.testing.assert_allclose(explained_qv_ratios([3.0, 1.0]), [0.75, 1.0])
    np.testing.assert_allclose(explained_qv_ratios([1.0, 0.0, 0.0]), [1.0, 1.0, 1.0])
    ratios = explained_qv_ratios([4.0, 2.5, 1.0, 0.01])
    assert np.all(np.diff(ratios) >= 0)
    assert ratios[-1] == 1.0


def test_explained_qv_ratios_zero_spectrum():
    with pytest.raises(DegenerateSpectrumError):
        explained_qv_ratios([0.0, 0.0])


def random_unit_vectors(dim, count=10000):
    u = np.random.default_rng(9).standard_normal((count, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def test_variational_characterization():
    split = four_factor_split(2)
    u = random_unit_vectors(4, count=100000)
    forms = np.einsum('ij,jk,ik->i', u, split.qv.matrix, u)
    top = split.eigenvalues[0]
    assert forms.max() <= top + 1e-12 * split.qv.trace
    assert forms.max() >= 0.99 * top

    toy = pca_split(euler_maruyama(model_toy_drift(), equidistant_grid(1.0, 2001), make_rng(2)))
    u = random_unit_vectors(2)
    toy_forms = np.einsum('ij,jk,ik->i', u, toy.qv.matrix, u)
    assert toy_forms.max() <= toy.eigenvalues[0] + 1e-12 * toy.qv.trace
    assert toy_forms.max() >= 0.99 * toy.eigenvalues[0]


def test_components_are_qv_orthogonal():
    split = four_factor_split(2)
    top = split.eigenvalues[0]
    v = split.rotation
    cross = v @ split.qv.matrix @ v.T
    off_diagonal = cross - np.diag(np.diag(cross))
    assert np.max(np.abs(off_diagonal)) <= 1e-8 * split.qv.trace
    assert qv_quadratic_form(v[0], split.qv) == pytest.approx(top, rel=1e-10)


def test_ols_project_exact_members():
    split = four_factor_split(4)
    j = split.j_paths.values
    result = ols_project(2 * j[:, 0], split)
    np.testing.assert_allclose(result.coefficients, [2, 0, 0, 0], atol=1e-8)
    assert np.linalg.norm(result.residual) <= 1e-8 * np.linalg.norm(j[:, 0])
    assert not result.rank_deficient
    mixed = ols_project(j[:, 0] + 3 * j[:, 3], split)
    np.testing.assert_allclose(mixed.coefficients, [1, 0, 0, 3], atol=1e-8)


def test_ols_project_with_noise():
    split = four_factor_split(5)
    j = split.j_paths.values
    noise = 0.01 * np.random.default_rng(1).standard_normal(j.shape[0])
    result = ols_project(j[:, 0] + noise, split)
    assert np.linalg.norm(result.coefficients - np.array([1, 0, 0, 0])) < 0.05
    residual_scale = np.linalg.norm(result.residual) * np.linalg.norm(j, axis=0)
    assert np.all(np.abs(j.T @ result.residual) <= 1e-8 * residual_scale)


def test_ols_project_rank_deficient_design():
    t = np.linspace(0, 1, 101)
    b = np.concatenate([[0.0], make_rng(2).standard_normal(100).cumsum()])
    split = pca_split(MultiPath(t, np.column_stack([b, b])), 0.01)
    result = ols_project(b, split)
    assert result.rank_deficient
    np.testing.assert_allclose(result.fitted, b, atol=1e-8)


def test_ols_project_shape_mismatch():
    split = four_factor_split(6)
    with pytest.raises(ShapeError):
        ols_project(np.zeros(10), split)
