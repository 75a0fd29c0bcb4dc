import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lvhba.errors import PreconditionError, ProjectionError, UnsupportedSetError
from lvhba.sets import (AffineSubspace, Ball, Box, Halfspace, Hyperplane, Intersection, Product, WholeSpace,
                        contains, nonneg_box, project, tangent_residual)


def analytic_sets():
    rng = np.random.default_rng(42)
    return [
        WholeSpace(3),
        Box(np.array([-1.0, 0.0, -np.inf]), np.array([1.0, 2.0, 0.5])),
        Hyperplane(np.array([1.0, -2.0, 0.5]), 0.7),
        Halfspace(np.array([1.0, 1.0, 1.0]), 0.0),
        AffineSubspace(rng.standard_normal((2, 3)), np.array([0.3, -0.1])),
        Ball(np.array([0.5, -0.5, 0.0]), 1.5),
        Product([Box.uniform(1, 0.0, 1.0), Ball(np.zeros(2), 1.0)]),
    ]


# --- analytic projections ---

def test_halfspace_projection_formula():
    h = Halfspace(np.array([-1.0, 1.0]), 0.0)
    assert_allclose(h.project(np.array([-1.01, 0.0])), [-0.505, -0.505])
    # inside points are returned unchanged
    assert_allclose(h.project(np.array([2.0, 1.0])), [2.0, 1.0])


def test_box_clips_and_nonneg_box():
    box = nonneg_box(3, 10.0)
    assert_allclose(box.project(np.array([-1.0, 5.0, 12.0])), [0.0, 5.0, 10.0])
    assert nonneg_box(0, 10.0).project(np.zeros(0)).shape == (0,)


def test_hyperplane_and_affine_agree_for_single_row():
    a = np.array([1.0, 2.0, -1.0])
    w = np.array([0.3, -1.2, 4.0])
    assert_allclose(Hyperplane(a, 1.5).project(w), AffineSubspace(a[None, :], [1.5]).project(w), atol=1e-12)


def test_affine_projection_matches_pseudoinverse(rng):
    M = rng.standard_normal((3, 6))
    c = rng.standard_normal(3)
    w = rng.standard_normal(6)
    expected = w - np.linalg.pinv(M) @ (M @ w - c)
    assert_allclose(AffineSubspace(M, c).project(w), expected, atol=1e-10)


def test_affine_rank_deficient_raises():
    M = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ProjectionError):
        AffineSubspace(M, np.zeros(2))


def test_ball_projection():
    ball = Ball(np.zeros(2), 2.0)
    assert_allclose(ball.project(np.array([3.0, 4.0])), [1.2, 1.6])


def test_dimension_mismatch():
    with pytest.raises(PreconditionError):
        Box.uniform(2, 0.0, 1.0).project(np.zeros(3))


def test_contains_reports_violation():
    ok, violation = contains(Halfspace(np.array([1.0]), 1.0), np.array([1.5]))
    assert not ok
    assert violation == pytest.approx(0.5)
    assert contains(Halfspace(np.array([1.0]), 1.0), np.array([1.5]), tol=0.6)[0]


@pytest.mark.parametrize("convex_set", analytic_sets(), ids=lambda s: type(s).__name__)
def test_projection_is_idempotent_and_nonexpansive(convex_set):
    rng = np.random.default_rng(1)
    for _ in range(1000):
        u = rng.normal(0.0, 3.0, convex_set.dim)
        v = rng.normal(0.0, 3.0, convex_set.dim)
        pu, pv = project(convex_set, u), project(convex_set, v)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12
        assert_allclose(convex_set.project(pu), pu, atol=1e-10)


@pytest.mark.parametrize("convex_set", analytic_sets(), ids=lambda s: type(s).__name__)
def test_projection_variational_inequality(convex_set):
    rng = np.random.default_rng(2)
    for _ in range(1000):
        u = rng.normal(0.0, 3.0, convex_set.dim)
        pu = convex_set.project(u)
        s = convex_set.sample(rng, 3.0)
        assert (u - pu) @ (s - pu) <= 1e-9 * (1.0 + np.linalg.norm(u - pu) * np.linalg.norm(s - pu))


# --- tangent residuals ---

def test_tangent_residual_interior_equals_norm():
    d = np.array([0.3, -0.4])
    assert tangent_residual(Ball(np.zeros(2), 5.0), np.zeros(2), d) == pytest.approx(0.5)
    assert tangent_residual(WholeSpace(2), np.ones(2), d) == pytest.approx(0.5)


def test_box_tangent_residual_at_bounds():
    box = Box.uniform(1, 0.0, 1.0)
    # gradient pushing outward at the lower bound is absorbed by the normal cone
    assert box.tangent_residual(np.array([0.0]), np.array([1.0])) == 0.0
    assert box.tangent_residual(np.array([0.0]), np.array([-1.0])) == pytest.approx(1.0)
    assert box.tangent_residual(np.array([1.0]), np.array([-1.0])) == 0.0


def test_halfspace_and_hyperplane_tangent_residual():
    a = np.array([1.0, 1.0])
    on_boundary = np.array([0.5, -0.5])
    assert Halfspace(a, 0.0).tangent_residual(on_boundary, -2.0 * a) == pytest.approx(0.0, abs=1e-15)
    assert Halfspace(a, 0.0).tangent_residual(on_boundary, 2.0 * a) == pytest.approx(2.0 * np.sqrt(2.0))
    assert Hyperplane(a, 0.0).tangent_residual(on_boundary, np.array([1.0, -1.0])) == pytest.approx(np.sqrt(2.0))
    assert Hyperplane(a, 0.0).tangent_residual(on_boundary, 3.0 * a) == pytest.approx(0.0, abs=1e-15)


def test_degenerate_ball_has_trivial_tangent_cone():
    point = Ball(np.zeros(2), 0.0)
    assert point.tangent_residual(np.zeros(2), np.array([3.0, 4.0])) == 0.0


@pytest.mark.parametrize("convex_set", analytic_sets(), ids=lambda s: type(s).__name__)
def test_tangent_residual_matches_small_projected_step(convex_set):
    rng = np.random.default_rng(11)
    t = 1e-8
    for i in range(60):
        # alternate interior draws and boundary points obtained from far-away projections
        scale = 0.5 if i % 2 else 5.0
        w = convex_set.project(rng.normal(0.0, scale, convex_set.dim))
        d = rng.standard_normal(convex_set.dim)
        step = np.linalg.norm(convex_set.project(w - t * d) - w) / t
        assert convex_set.tangent_residual(w, d) == pytest.approx(step, rel=1e-6, abs=1e-6)


def test_tangent_residual_rejects_outside_point():
    with pytest.raises(PreconditionError):
        Box.uniform(1, 0.0, 1.0).tangent_residual(np.array([2.0]), np.array([1.0]))


def test_product_tangent_residual_is_root_sum_square():
    prod = Product([Box.uniform(1, 0.0, 1.0), WholeSpace(1)])
    assert prod.tangent_residual(np.array([0.0, 0.0]), np.array([-3.0, 4.0])) == pytest.approx(5.0)


def test_intersection_tangent_needs_model():
    members = [Halfspace(np.array([1.0, 0.0]), 1.0), Halfspace(np.array([0.0, 1.0]), 1.0)]
    with pytest.raises(UnsupportedSetError):
        Intersection(members).tangent_residual(np.zeros(2), np.ones(2))
    modelled = Intersection(members, tangent_model=Box(np.full(2, -np.inf), np.ones(2)))
    assert modelled.tangent_residual(np.ones(2), np.array([-1.0, -1.0])) == 0.0


# --- Dykstra against brute-force active-set enumeration ---

def brute_force_projection(A, b, u):
    """Enumerate active sets of min ||w - u|| s.t. A w <= b and keep the KKT-valid candidate."""
    m, dim = A.shape
    best, best_dist = None, np.inf
    for size in range(0, min(m, dim) + 1):
        for active in itertools.combinations(range(m), size):
            idx = list(active)
            if idx:
                As = A[idx]
                if np.linalg.matrix_rank(As) < len(idx):
                    continue
                mu = np.linalg.solve(As @ As.T, As @ u - b[idx])
                if np.any(mu < -1e-12):
                    continue
                w = u - As.T @ mu
            else:
                w = u.copy()
            if np.all(A @ w <= b + 1e-10):
                dist = np.linalg.norm(w - u)
                if dist < best_dist:
                    best, best_dist = w, dist
    return best


def test_dykstra_matches_active_set_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(50):
        dim = int(rng.integers(2, 6))
        m = int(rng.integers(1, 7))
        A = rng.standard_normal((m, dim))
        b = rng.uniform(0.0, 1.0, m)
        u = rng.normal(0.0, 3.0, dim)
        inter = Intersection([Halfspace(A[i], b[i]) for i in range(m)])
        assert_allclose(inter.project(u), brute_force_projection(A, b, u), atol=1e-6)


def test_dykstra_empty_intersection_raises():
    members = [Halfspace(np.array([1.0]), -1.0), Halfspace(np.array([-1.0]), -1.0)]
    with pytest.raises(ProjectionError):
        Intersection(members, dykstra_iters=50).project(np.zeros(1))
