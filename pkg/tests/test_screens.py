import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projdyn.errors import DomainError, InconsistentStateError, InvalidArgumentError
from projdyn.exterior import AlternatingForm, Multivector, wedge
from projdyn.forces import ZeroField
from projdyn.integrate import integrate
from projdyn.screens import (
    CylinderScreen,
    FlatScreen,
    GeneralQuadraticScreen,
    ProjectiveState,
    ScreenState,
    SphereScreen,
    impulsion_to_velocity,
    project_to_screen,
    ray_angle,
    reaction_lambda,
    same_ray,
    screen_eval,
    velocity_to_impulsion,
)

CYL = np.diag([1.0, 1.0, 0.0])


def E(*idx):
    return Multivector.basis(3, *idx)


# --- screen_eval


def test_flat_eval():
    h, dh, hess = screen_eval(FlatScreen([0, 0, 1]), [2, 5, 4])
    assert h == 4.0
    assert np.array_equal(dh.coeffs, [0, 0, 1])
    assert not hess.any()


def test_sphere_eval_matches_symbolic_derivative():
    h, dh, hess = screen_eval(SphereScreen(dim=3), [1, 0, 0])
    assert h == 1.0
    assert np.allclose(dh.coeffs, [1, 0, 0])
    assert np.allclose(hess, np.diag([0, 1, 1]))


def test_cylinder_eval():
    h, dh, _ = screen_eval(CylinderScreen(CYL), [0, 1, 7])
    assert h == pytest.approx(1.0)
    assert np.allclose(dh.coeffs, [0, 1, 0])


def test_domain_errors():
    with pytest.raises(DomainError):
        screen_eval(FlatScreen([0, 0, 1]), [1, 0, -1])
    with pytest.raises(DomainError):
        screen_eval(CylinderScreen(CYL), [0, 0, 3])
    with pytest.raises(DomainError):
        screen_eval(GeneralQuadraticScreen(np.diag([1.0, 1.0, -1.0])), [0, 0, 1])


def test_screen_construction_errors():
    with pytest.raises(InvalidArgumentError):
        SphereScreen(CYL)
    with pytest.raises(InvalidArgumentError):
        CylinderScreen(np.diag([1.0, 0.0, 0.0]))
    with pytest.raises(InvalidArgumentError):
        CylinderScreen(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidArgumentError):
        FlatScreen([0, 0, 0])


def test_cylinder_kernel():
    assert np.allclose(np.abs(CylinderScreen(CYL).kernel), [0, 0, 1])


def test_hessian_against_finite_differences():
    rng = np.random.default_rng(4)
    B = rng.standard_normal((4, 4))
    s = SphereScreen(B @ B.T + np.eye(4))
    q = rng.standard_normal(4)
    eps = 1e-6
    num = np.array([(s.gradient(q + eps * e) - s.gradient(q - eps * e)) / (2 * eps) for e in np.eye(4)])
    assert np.allclose(num, s.hessian(q), atol=1e-8)


# --- projection


def test_project_examples():
    assert np.allclose(project_to_screen(FlatScreen([1, 0, 0]), [2, 4, 6]).coeffs, [1, 2, 3])
    assert np.allclose(project_to_screen(SphereScreen(dim=3), [3, 4, 0]).coeffs, [0.6, 0.8, 0])
    assert np.allclose(project_to_screen(CylinderScreen(CYL), [3, 4, 9]).coeffs, [0.6, 0.8, 1.8])
    with pytest.raises(DomainError):
        project_to_screen(FlatScreen([1, 0, 0]), [-1, 0, 0])
    with pytest.raises(DomainError):
        project_to_screen(FlatScreen([1, 0, 0]), [0, 0, 0])


# --- impulsions and velocities


def test_impulsion_to_velocity_examples():
    s = FlatScreen([1, 0, 0])
    q = np.array([1.0, 0, 0])
    assert np.allclose(impulsion_to_velocity(s, q, velocity_to_impulsion(q, [0, 1, 0])).coeffs, [0, 1, 0])
    assert np.allclose(impulsion_to_velocity(s, q, velocity_to_impulsion(q, [5, 1, 0])).coeffs, [0, 1, 0])
    assert np.allclose(impulsion_to_velocity(SphereScreen(dim=3), q, E(0, 1)).coeffs, [0, 1, 0])


def test_impulsion_to_velocity_inconsistent():
    s = FlatScreen([1, 0, 0])
    with pytest.raises(InconsistentStateError):
        impulsion_to_velocity(s, [2, 0, 0], E(0, 1))
    with pytest.raises(InconsistentStateError):
        impulsion_to_velocity(s, [1, 0, 0], E(1, 2))


def test_velocity_to_impulsion_examples():
    assert velocity_to_impulsion([1, 0, 0], [0, 1, 0]) == E(0, 1)
    assert velocity_to_impulsion([1, 2, 3], [2, 4, 6]).norm() == 0.0


screens = st.sampled_from(["flat", "sphere", "cylinder"])


def make(kind, rng):
    if kind == "flat":
        return FlatScreen([0.3, -0.2, 1.0])
    if kind == "sphere":
        A = rng.standard_normal((3, 3))
        return SphereScreen(A @ A.T + np.eye(3))
    return CylinderScreen(CYL)


def domain_point(s, rng):
    while True:
        q = rng.standard_normal(3) + np.array([0.0, 0.0, 2.0])
        if s.in_domain(q) and s.value(q) > 0.1 * np.linalg.norm(q):
            return q


@given(screens, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_euler_identity_and_gradient_homogeneity(kind, seed):
    rng = np.random.default_rng(seed)
    s = make(kind, rng)
    q = domain_point(s, rng)
    assert abs(s.gradient(q) @ q - s.value(q)) <= 1e-12 * s.value(q) * 10
    for lam in (0.5, 2.0):
        assert abs(s.value(lam * q) - lam * s.value(q)) <= 1e-12 * lam * s.value(q) * 10
        assert np.allclose(s.gradient(lam * q), s.gradient(q), rtol=1e-12, atol=1e-14)


@given(screens, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_round_trip_and_radial_independence(kind, seed):
    rng = np.random.default_rng(seed)
    s = make(kind, rng)
    q = project_to_screen(s, domain_point(s, rng)).coeffs
    v = rng.standard_normal(3)
    v_t = v - (s.gradient(q) @ v) * q  # tangent part
    back = impulsion_to_velocity(s, q, velocity_to_impulsion(q, v_t)).coeffs
    assert np.allclose(back, v_t, atol=1e-12 * max(1, np.abs(v_t).max()) * 10)
    mu = rng.standard_normal()
    other = impulsion_to_velocity(s, q, velocity_to_impulsion(q, v + mu * q)).coeffs
    direct = impulsion_to_velocity(s, q, velocity_to_impulsion(q, v)).coeffs
    assert np.allclose(other, direct, atol=1e-12 * max(1, abs(mu)) * 10)
    assert abs(s.gradient(q) @ direct) < 1e-12 * 10 * max(1, np.abs(direct).max())


# --- reaction coefficient


def test_reaction_flat_zero():
    assert reaction_lambda(FlatScreen([0, 0, 1]), [0.3, 0.1, 1], [1, 2, 0]) == 0.0


def test_reaction_sphere_unit_tangent():
    assert reaction_lambda(SphereScreen(dim=3), [1, 0, 0], [0, 0.6, 0.8]) == pytest.approx(-1.0)


def test_reaction_cylinder_angular_rate():
    th, rate = 0.7, 1.9
    q = [np.cos(th), np.sin(th), 0.4]
    v = [-rate * np.sin(th), rate * np.cos(th), 0.25]
    assert reaction_lambda(CylinderScreen(CYL), q, v) == pytest.approx(-(rate**2))


def test_reaction_inconsistent_state():
    with pytest.raises(InconsistentStateError):
        reaction_lambda(SphereScreen(dim=3), [1, 0, 0], [1, 0, 0])


# --- state types


def test_screen_state_checks():
    s = SphereScreen(dim=3)
    st_ = ScreenState([1, 0, 0], [0, 1, 0], s)
    assert st_.pi == E(0, 1)
    with pytest.raises(InconsistentStateError):
        ScreenState([2, 0, 0], [0, 1, 0], s)
    with pytest.raises(InconsistentStateError):
        ScreenState([1, 0, 0], [1, 1, 0], s)


def test_projective_state_checks():
    ProjectiveState([1, 0, 0], E(0, 1))
    with pytest.raises(InconsistentStateError):
        ProjectiveState([0, 0, 0], E(0, 1))
    with pytest.raises(InconsistentStateError):
        ProjectiveState([0, 0, 1], E(0, 1))


def test_ray_equality_by_angle():
    assert same_ray([1, 2, 3], [2, 4, 6])
    assert not same_ray([1, 2, 3], [-1, -2, -3])
    assert ray_angle([1, 0, 0], [0, 1, 0]) == pytest.approx(np.pi / 2)


@pytest.mark.parametrize("kind", ["flat", "sphere", "cylinder"])
def test_free_motion_stays_on_screen(kind):
    s = make(kind, np.random.default_rng(0))
    q = project_to_screen(s, [0.2, 0.1, 1.0]).coeffs
    v = np.array([0.3, -0.4, 0.1])
    v -= (s.gradient(q) @ v) * q
    traj = integrate(ZeroField(3), s, ScreenState(q, v, s), 3.0)
    assert traj.h_residuals().max() < 1e-9 * 3.0
