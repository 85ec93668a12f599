import numpy as np
import pytest

from twinlab import constructions as C
from twinlab.certificate import (
    TestFunction2D,
    best_slice_bound,
    build_eta,
    dual_bound,
    lower_bound_energy,
    slice_curl_form,
    snap_plane,
    triangle_bump,
)
from twinlab.grid import (
    BoundaryCondition,
    DisplacementField,
    GridSpec,
    SignField,
    apply_bc,
    elastic_energy,
)

TB = BoundaryCondition.top_bottom()


def random_admissible(g, rng):
    amp = rng.uniform(0.01, 1.0)
    smooth = rng.uniform() < 0.5
    if smooth:
        X1, X2, X3 = g.vertex_mesh()
        c = rng.normal(size=(3, 4))
        vals = np.stack(
            [c[i, 0] * np.sin(2 * X1 + c[i, 1]) * np.cos(X2 * c[i, 2]) * (X3 + c[i, 3]) for i in range(3)]
        )
    else:
        vals = rng.normal(size=(3,) + (g.N + 1,) * 3)
    return apply_bc(DisplacementField(g, amp * vals + C.u_star(1.0, g.vertex_mesh())), TB)


def laminate_field(g, n, symmetric=True):
    lam = C.LaminateParams(1.0, n, symmetric)
    return DisplacementField(g, C.laminate_u(lam, g.vertex_mesh()))


def test_zero_test_function_gives_zero():
    g = GridSpec(8)
    u = laminate_field(g, 2)
    eta = TestFunction2D(g, np.zeros((9, 9)))
    assert dual_bound(u, eta, 0.0).value == 0.0


def test_test_function_must_vanish_on_boundary():
    g = GridSpec(4)
    v = np.zeros((5, 5))
    v[0, 2] = 1e-3
    with pytest.raises(ValueError):
        TestFunction2D(g, v)


def test_bc_violation_rejected():
    g = GridSpec(8)
    u = DisplacementField(g, C.affine_w(1.0, g.vertex_mesh()))
    eta, _ = build_eta(laminate_field(g, 2), 0.0)
    with pytest.raises(ValueError):
        dual_bound(u, eta, 0.0)
    with pytest.raises(ValueError):
        best_slice_bound(u)


def test_lambda_scaling_is_quadratic():
    g = GridSpec(16)
    u = laminate_field(g, 2)
    eta, _ = build_eta(u, 0.0)
    base = dual_bound(u, eta, 0.0)
    for lam in (-1.5, 0.3, 2.0, 7.0):
        db = dual_bound(u, eta.scaled(lam), 0.0)
        assert db.value == pytest.approx(lam * base.linear - lam**2 * base.quadratic, rel=1e-12, abs=1e-14)
    lam_opt = base.linear / (2 * base.quadratic)
    best = dual_bound(u, eta.scaled(lam_opt), 0.0).value
    assert best == pytest.approx(base.linear**2 / (4 * base.quadratic))
    for lam in np.linspace(0, 2 * lam_opt, 21):
        assert dual_bound(u, eta.scaled(lam), 0.0).value <= best + 1e-14


def test_build_eta_slice_data_invariants():
    g = GridSpec(32)
    u = laminate_field(g, 3)
    eta, data = build_eta(u, 0.0)
    h = g.h
    # beta has zero trapezoid mean, eta0 vanishes at both ends
    assert abs(np.sum(0.5 * (data.beta[:-1] + data.beta[1:])) * h) < 1e-12
    assert data.eta0[0] == 0.0 and data.eta0[-1] == 0.0
    assert np.all(eta.values[[0, -1], :] == 0) and np.all(eta.values[:, [0, -1]] == 0)
    assert data.c_theta > 0 and data.scale < 0
    # phi of the laminate alternates between two levels
    assert np.ptp(data.phi) > 1.0


def test_relaxed_solution_carries_no_certificate():
    g = GridSpec(16)
    u = DisplacementField(g, C.u_star(1.0, g.vertex_mesh()))
    eta, data = build_eta(u, 0.0)
    assert np.max(np.abs(data.phi)) < 1e-13
    assert np.max(np.abs(eta.values)) < 1e-13
    assert best_slice_bound(u).bound == pytest.approx(0.0, abs=1e-20)


def test_laminate_certificate_positive_and_grows_with_coarser_layers():
    g = GridSpec(32)
    bounds = [best_slice_bound(laminate_field(g, n)).bound for n in (4, 2, 1)]
    assert all(b > 0 for b in bounds)
    assert bounds[0] < bounds[1] < bounds[2]


@pytest.mark.parametrize("seed", range(10))
def test_bound_below_slab_and_elastic_energy(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(8)
    u = random_admissible(g, rng)
    el = elastic_energy(u, SignField.from_strain(u))
    for x1 in (-0.6, -0.1, 0.0, 0.4):
        eta, _ = build_eta(u, x1)
        eta = eta.scaled(rng.normal() * 10)
        db = dual_bound(u, eta, x1)
        # exact discrete inequality: only rounding separates the two
        assert db.value <= lower_bound_energy(u, db.plane) + 1e-12
        assert db.value <= el + 1e-12
    cert = best_slice_bound(u)
    assert cert.bound <= el + 1e-12


def test_arbitrary_test_functions_are_also_dominated():
    rng = np.random.default_rng(42)
    g = GridSpec(6)
    for _ in range(20):
        u = random_admissible(g, rng)
        v = np.zeros((7, 7))
        v[1:-1, 1:-1] = rng.normal(size=(5, 5)) * 5
        eta = TestFunction2D(g, v)
        x1 = float(rng.uniform(-0.9, 0.9))
        db = dual_bound(u, eta, x1)
        assert db.value <= lower_bound_energy(u, db.plane) + 1e-12


def test_linear_term_agrees_with_curl_form_under_refinement():
    # smooth admissible field: integrated-by-parts form vs direct curl quadrature
    errs = []
    for N in (8, 16, 32):
        g = GridSpec(N)
        X1, X2, X3 = g.vertex_mesh()
        bump = (1 - X1**2) * (1 - X2**2) * (1 - X3**2)
        vals = C.u_star(1.0, g.vertex_mesh()) + np.stack([0 * X1, bump * X2, bump * np.sin(X3)])
        u = DisplacementField(g, vals)
        th = triangle_bump(g.nodes)
        e0 = np.cos(0.5 * np.pi * g.nodes)
        e0[[0, -1]] = 0.0
        v = np.outer(th, e0)
        eta = TestFunction2D(g, v)
        db = dual_bound(u, eta, 0.0)
        errs.append(abs(db.linear - slice_curl_form(u, eta, 0.0)))
    assert errs[2] < errs[0]


def test_snap_plane():
    g = GridSpec(8)
    assert snap_plane(g, 0.0) == 4
    assert snap_plane(g, -0.99) == 1
    with pytest.raises(ValueError):
        snap_plane(g, 1.0)


def test_custom_theta_validation():
    g = GridSpec(8)
    u = laminate_field(g, 1)
    with pytest.raises(ValueError):
        build_eta(u, 0.0, theta=lambda x: -np.ones_like(x))
    with pytest.raises(ValueError):
        build_eta(u, 0.0, theta=lambda x: np.ones_like(x))
    eta, data = build_eta(u, 0.0, theta=lambda x: 1 - x**2)
    assert data.c_theta > 0
