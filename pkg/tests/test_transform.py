from __future__ import annotations

import numpy as np
import pytest

from src.errors import DomainError, GeometryError, ShapeMismatchError
from src.imaging.grid import ImageGrid, div_array, grad_array, lattice, rotate_image, sample
from src.imaging.phantom import disc_spec, make_phantom
from src.solver.chambolle_pock import Regularizer, SolverConfig, stacked_norm
from src.transform.opnorm import dot_product_test, estimate_opnorm
from src.transform.vline import (
    ScanGeometry,
    Sinogram,
    VLineOperator,
    adjoint,
    backproject_continuous,
    backproject_points,
    forward,
    operator_for,
)
from src.transform.weights import (
    constant_weight,
    exponential_weight,
    power_weight,
    weight_from_label,
)


def _gaussian(center, width):
    cx, cy = center
    return lambda X, Y: np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width ** 2))


# =========================
# GEOMETRY AND WEIGHTS
# =========================

def test_geometry_grids():
    geom = ScanGeometry.for_grid(16, 20, 10)
    assert geom.shape == (20, 11)
    assert geom.phi[5] == pytest.approx(np.pi / 2)
    assert geom.psi[-1] == pytest.approx(np.pi / 2)
    assert geom.radii[-1] == pytest.approx(2.0)
    assert geom.trapezoid.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("P, Q, n_radii", [(0, 10, 17), (20, 0, 17), (20, 10, 1)])
def test_geometry_rejects_bad_parameters(P, Q, n_radii):
    with pytest.raises(GeometryError):
        ScanGeometry(P=P, Q=Q, n_radii=n_radii)


def test_weight_families():
    r = np.linspace(0.0, 2.0, 5)
    np.testing.assert_allclose(constant_weight()(r), 1.0)
    np.testing.assert_allclose(exponential_weight(0.5)(r), np.exp(-0.5 * r))
    np.testing.assert_allclose(exponential_weight(0.5).derivative(r), -0.5 * np.exp(-0.5 * r))
    np.testing.assert_allclose(power_weight(2)(r), r ** 2)
    assert weight_from_label("exp", 1.0).label == exponential_weight(1.0).label
    with pytest.raises(DomainError):
        weight_from_label("gaussian")
    with pytest.raises(DomainError):
        power_weight(-1)


def test_equal_weights_share_cached_operators():
    assert exponential_weight(0.5) == exponential_weight(0.5)
    assert hash(exponential_weight(0.5)) == hash(weight_from_label("exp", 0.5))
    assert exponential_weight(0.5) != exponential_weight(0.6)
    assert constant_weight() != exponential_weight(0.0)

    first = ScanGeometry.for_grid(8, 6, 4, exponential_weight(0.5))
    second = ScanGeometry.for_grid(8, 6, 4, weight_from_label("exponential", 0.5))
    assert first == second
    assert operator_for(first, 9) is operator_for(second, 9)


# =========================
# FORWARD OPERATOR
# =========================

def test_zero_image_gives_zero_data(small_op):
    assert not np.any(small_op.forward(ImageGrid.zeros(17)).values)


def test_forward_checks_image_size(small_op):
    with pytest.raises(ShapeMismatchError):
        small_op.forward(ImageGrid.zeros(9))
    with pytest.raises(ShapeMismatchError):
        small_op.adjoint(Sinogram(np.zeros((20, 5))))


def test_linearity(small_op, rng):
    f1 = rng.standard_normal((17, 17))
    f2 = rng.standard_normal((17, 17))
    np.testing.assert_allclose(
        small_op.apply(2.0 * f1 - 3.0 * f2),
        2.0 * small_op.apply(f1) - 3.0 * small_op.apply(f2),
        atol=1e-12,
    )


def test_centered_disc_matches_chord_lengths():
    # with U = 1 each branch crosses a centered disc of radius 1/2 along 2 sqrt(1/4 - sin^2 psi)
    geom = ScanGeometry.for_grid(128, 64, 50, constant_weight())
    g = forward(make_phantom(128, disc_spec(0.5)), geom)

    averaged = g.values.mean(axis=0)
    keep = np.sin(geom.psi) < 0.4
    exact = 4.0 * np.sqrt(0.25 - np.sin(geom.psi[keep]) ** 2)
    np.testing.assert_allclose(averaged[keep], exact, rtol=2e-2)


@pytest.mark.slow
def test_centered_disc_matches_chord_lengths_at_reference_scale():
    geom = ScanGeometry.for_grid(256, 200, 150, constant_weight())
    g = forward(make_phantom(256, disc_spec(0.5)), geom)

    averaged = g.values.mean(axis=0)
    keep = np.sin(geom.psi) < 0.45
    exact = 4.0 * np.sqrt(0.25 - np.sin(geom.psi[keep]) ** 2)
    np.testing.assert_allclose(averaged[keep], exact, rtol=1e-2)


def test_quarter_turn_rotates_vertices():
    geom = ScanGeometry.for_grid(64, 36, 20, exponential_weight(0.5))
    img = ImageGrid.from_function(_gaussian((0.15, -0.1), 0.12), 65)
    g = forward(img, geom).values
    g_rot = forward(rotate_image(img, np.pi / 2), geom).values

    shifted = np.roll(g, 9, axis=0)
    assert np.linalg.norm(g_rot - shifted) <= 1e-6 * np.linalg.norm(g)


def test_first_column_is_twice_a_single_ray():
    geom = ScanGeometry.for_grid(32, 8, 6, exponential_weight(0.5))
    img = ImageGrid.from_function(_gaussian((0.1, 0.2), 0.3), 33)
    g = forward(img, geom).values

    for k, phi in enumerate(geom.phi):
        x = np.cos(phi) - geom.radii * np.cos(phi)
        y = np.sin(phi) - geom.radii * np.sin(phi)
        ray = np.sum(geom.radial_weights() * sample(img, x, y))
        assert g[k, 0] == pytest.approx(2.0 * ray, rel=1e-12, abs=1e-14)


def test_stronger_attenuation_lowers_data():
    img = make_phantom(32, disc_spec(0.5))
    weak = forward(img, ScanGeometry.for_grid(32, 16, 8, exponential_weight(0.2))).values
    strong = forward(img, ScanGeometry.for_grid(32, 16, 8, exponential_weight(1.0))).values
    assert np.all(strong <= weak + 1e-15)
    assert strong.sum() < weak.sum()


# =========================
# ADJOINT
# =========================

@pytest.mark.parametrize("seed", range(20))
def test_dot_product(small_op, seed):
    assert dot_product_test(small_op, seed=seed) < 1e-12


def test_mismatched_adjoint_is_caught(small_op):
    assert max(dot_product_test(small_op, seed=s, mismatched=True) for s in range(5)) > 1e-3


def test_module_level_adjoint_matches_operator(small_geom, rng):
    g = Sinogram(rng.standard_normal(small_geom.shape))
    np.testing.assert_allclose(
        adjoint(g, small_geom, 17).values,
        VLineOperator(small_geom, 17).adjoint(g).values,
        atol=1e-12,
    )


def test_single_entry_backprojects_onto_its_two_rays():
    geom = ScanGeometry.for_grid(32, 12, 8, constant_weight())
    op = VLineOperator(geom, 33)
    k, l = 3, 5
    data = np.zeros(geom.shape)
    data[k, l] = 1.0
    image = op.apply_adjoint(data)

    X, Y = lattice(33)
    px, py = X[image != 0], Y[image != 0]
    assert px.size > 0

    phi, psi = geom.phi[k], geom.psi[l]
    z = np.array([np.cos(phi), np.sin(phi)])
    h = 2.0 / 32
    distances = []
    for sigma in (1.0, -1.0):
        e = -np.array([np.cos(phi - sigma * psi), np.sin(phi - sigma * psi)])
        t = np.clip((px - z[0]) * e[0] + (py - z[1]) * e[1], 0.0, 2.0)
        distances.append(np.hypot(px - z[0] - t * e[0], py - z[1] - t * e[1]))
    assert np.all(np.minimum(*distances) <= np.sqrt(2.0) * h + 1e-9)


# =========================
# CONTINUOUS BACKPROJECTION
# =========================

def test_backprojection_of_zero_is_zero():
    geom = ScanGeometry.for_grid(16, 20, 10)
    assert not np.any(backproject_continuous(Sinogram(np.zeros(geom.shape)), geom).values)


def test_backprojection_of_constant_is_radial():
    geom = ScanGeometry.for_grid(32, 32, 16, constant_weight())
    g = Sinogram(np.ones(geom.shape))

    theta = np.linspace(0.0, 2.0 * np.pi, 37)
    ring = backproject_points(g, geom, 0.5 * np.cos(theta), 0.5 * np.sin(theta))
    assert np.ptp(ring) <= 1e-6 * ring.mean()
    # every vertex sits at distance 1 from the origin
    assert float(backproject_points(g, geom, 0.0, 0.0)) == pytest.approx(2.0 * np.pi)
    assert float(backproject_points(g, geom, 0.9, 0.9)) == 0.0


def test_backprojection_is_quadrature_adjoint():
    geom = ScanGeometry.for_grid(64, 64, 32, exponential_weight(0.5))
    img = ImageGrid.from_function(lambda X, Y: np.exp(-8.0 * (X ** 2 + Y ** 2)), 65)
    phi, psi = np.meshgrid(geom.phi, geom.psi, indexing="ij")
    g = Sinogram(1.0 + 0.5 * np.cos(phi) * np.cos(psi))

    lhs = np.sum(forward(img, geom).values * g.values * geom.data_quadrature())
    h = 2.0 / 64
    rhs = np.sum(img.values * backproject_continuous(g, geom).values) * h * h
    assert lhs == pytest.approx(rhs, rel=1e-2)


# =========================
# OPERATOR NORM
# =========================

def test_opnorm_of_identity():
    assert estimate_opnorm(lambda x: x, lambda y: y, (5, 5), iters=3) == pytest.approx(1.0)


def test_opnorm_of_zero_map():
    assert estimate_opnorm(np.zeros_like, np.zeros_like, (4, 4), iters=10) == 0.0


def test_opnorm_rejects_zero_iterations():
    with pytest.raises(DomainError):
        estimate_opnorm(lambda x: x, lambda y: y, (3,), iters=0)


def test_opnorm_of_random_matrix(rng):
    A = rng.standard_normal((30, 20))
    est = estimate_opnorm(lambda x: A @ x, lambda y: A.T @ y, (20,), iters=500, seed=3)
    assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_opnorm_never_decreases_with_iterations(small_op):
    short = estimate_opnorm(small_op.apply, small_op.apply_adjoint, small_op.image_shape, iters=5)
    long = estimate_opnorm(small_op.apply, small_op.apply_adjoint, small_op.image_shape, iters=50)
    assert long >= short


def test_stacked_norm_matches_dense_matrix():
    geom = ScanGeometry.for_grid(8, 10, 5, exponential_weight(0.5))
    op = VLineOperator(geom, 9)
    C = op.matrix.toarray()
    G = np.stack([np.ravel(grad_array(e.reshape(9, 9))) for e in np.eye(81)], axis=1)

    for regularizer, L in ((Regularizer.TV, G), (Regularizer.L2, np.eye(81))):
        exact = np.linalg.norm(np.vstack([C, L]), 2)
        cfg = SolverConfig(regularizer=regularizer, alpha=0.1, opnorm_iters=500)
        est = stacked_norm(op, cfg)
        assert est <= exact * (1.0 + 1e-12)
        assert est == pytest.approx(exact, rel=1e-2)
        assert exact >= max(np.linalg.norm(C, 2), np.linalg.norm(L, 2))

    # the gradient pair is adjoint to the negative divergence
    q = np.arange(2 * 81, dtype=float)
    np.testing.assert_allclose(G.T @ q, -np.ravel(div_array(q.reshape(2, 9, 9))))
