"""End-to-end acceptance criteria, one test each.

Every test records a PASS/FAIL line with its measured figure; the lines are
printed in the terminal summary (and immediately with ``-s``).
"""
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from projdyn.analysis import (
    LeafFrame,
    LeafState,
    apply_g_to_leaf_state,
    compare_screens,
    conic_analysis,
    constant_of_areas,
    dilation_map,
    divergence_check,
    fit_plane,
    newtonian_elements,
    random_transvection,
    return_map,
    symmetry_check_H,
    w_rotation,
)
from projdyn.forces import JacobiAttractor, KeplerField, ZeroField, halphen_transform, power_law_field, restrict_to_screen
from projdyn.integrate import IntegratorConfig, integrate
from projdyn.screens import CylinderScreen, FlatScreen, ScreenState, SphereScreen, project_to_screen

KEP = KeplerField.standard(3)
C = KEP.center
Z = FlatScreen([0, 0, 1])
FRAME = LeafFrame.for_field(KEP)
TIGHT = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def flat_state(r, v):
    return ScreenState([r[0], r[1], 1.0], [v[0], v[1], 0.0], Z)


def eccentric_states():
    return [LeafState(1.2, 0.9, 0.3), LeafState(0.7, 1.1, -0.4), LeafState(1.5, 0.8, 0.1),
            LeafState(1.0, -1.0, 0.35), LeafState(0.9, 1.3, 0.6)]


def test_criterion_01_screen_invariance():
    r, v = [0.5, 0.0], [0.0, 1.2]
    period = newtonian_elements(r, v)["period"]
    rep = compare_screens(KEP, Z, FlatScreen([1.0, 0.0, 1.0]), flat_state(r, v), period, TIGHT, tol=1e-6)
    record(1, "screen invariance", rep.passed,
           f"ray angle {rep.max_ray_angle:.2e} rad, pi deviation {rep.max_pi_deviation:.2e} (< 1e-6)")


def test_criterion_02_kepler_conic():
    traj = integrate(KEP, CylinderScreen(KEP.B), FRAME.projective(LeafState(1.2, 0.9, 0.3)),
                     2 * math.pi / 0.9, TIGHT, t_eval=401)
    rep = conic_analysis(traj)
    ok = (rep.max_plane_residual < 1e-7 and rep.theta_rate_deviation < 1e-8
          and rep.focus_residual < 1e-7 and rep.classification == "ellipse")
    record(2, "Kepler conic on the cylinder", ok,
           f"plane {rep.max_plane_residual:.2e}, rate {rep.theta_rate_deviation:.2e}, "
           f"focus {rep.focus_residual:.2e}, {rep.classification}")


def test_criterion_03_closed_orbits():
    worst_g = worst_close = worst_period = 0.0
    for s in eccentric_states():
        worst_g = max(worst_g, return_map(KEP, s, cfg=TIGHT).g.norm())
        # the same initial data on the screen z = 1 against the Newtonian oracle
        q, v = FRAME.vectors(s)
        r = q[:2] / q[2]
        vel = q[2] * (v[:2] - r * v[2])
        period = newtonian_elements(r, vel)["period"]
        traj = integrate(KEP, Z, flat_state(r, vel), period, TIGHT, t_eval=np.array([0.0, period]))
        close = np.max(np.abs(np.concatenate([traj.q[1] - traj.q[0], traj.velocity(1) - traj.velocity(0)])))
        worst_close = max(worst_close, close)
        measured = return_map(KEP, s, screen=Z, cfg=TIGHT).t
        worst_period = max(worst_period, abs(measured - period) / period)
    ok = worst_g < 1e-6 and worst_close < 1e-5 and worst_period < 1e-6
    record(3, "closed Kepler orbits", ok,
           f"|omega| {worst_g:.2e}, closure {worst_close:.2e}, period {worst_period:.2e} over 5 orbits")


def test_criterion_04_constant_of_areas():
    r, v = [1.0, 0.0], [0.0, 1.15]
    period = newtonian_elements(r, v)["period"]
    kep = integrate(KEP, Z, flat_state(r, v), 10 * period, TIGHT, t_eval=2001)
    _, d_kep = constant_of_areas(C, kep)
    jac = JacobiAttractor.anisotropic(np.diag([1.0, 2.5, 1.0]))
    traj = integrate(jac, Z, flat_state(r, v), 10 * period, TIGHT, t_eval=2001)
    _, d_jac = constant_of_areas(jac.center, traj)
    record(4, "constant of areas", d_kep < 1e-8 and d_jac < 1e-8,
           f"drift Kepler {d_kep:.2e}, anisotropic Jacobi {d_jac:.2e} over 10 periods")


def test_criterion_05_power_law_transform():
    h1 = np.array([0.3, -0.2, 1.0])
    rng = np.random.default_rng(5)
    pts = []
    while len(pts) < 50:
        q = np.append(rng.uniform(-0.8, 0.8, 2), 1.0)
        if h1 @ q > 0.3 and np.linalg.norm(q[:2]) > 0.1:
            pts.append(q / (h1 @ q))
    worst = 0.0
    for beta in (0.0, -1.0, -3.0):
        t = halphen_transform(beta, Z.form, h1, C)
        proj = t.projective_field()
        for q1 in pts:
            closed = t.closed_form(q1)
            scale = np.linalg.norm(closed)
            worst = max(worst, np.linalg.norm(t.appell_transport(q1) - closed) / scale,
                        np.linalg.norm(restrict_to_screen(proj, FlatScreen(h1), q1).coeffs - closed) / scale)
    kep = halphen_transform(-3.0, Z.form, h1, C)
    kepler_form = max(
        np.linalg.norm(kep.closed_form(q1) + kep.mass * math.sqrt((q1 - kep.c1) @ kep.B @ (q1 - kep.c1)) ** -3
                       * (q1 - kep.c1)) / np.linalg.norm(kep.closed_form(q1))
        for q1 in pts)
    ok = worst < 1e-8 and kep.exponent == 0.0 and kepler_form < 1e-12
    record(5, "power-law transform", ok,
           f"relative error {worst:.2e} at 50 points, beta=-3 exponent {kep.exponent}, Kepler form {kepler_form:.1e}")


def test_criterion_06_divergence():
    four = divergence_check(KeplerField.standard(4), tol=1e-5)
    three = divergence_check(KEP, tol=1e-5)
    worst = 0.0
    for dim in (3, 4, 5):
        last = np.eye(dim)[-1]
        for fs in (KeplerField.standard(dim), JacobiAttractor.anisotropic(np.diag(np.arange(1.0, dim + 1))),
                   power_law_field(last, last, 0.0), power_law_field(last, last, -1.0), ZeroField(dim)):
            worst = max(worst, divergence_check(fs, tol=1e-5).max_identity_residual)
    ok = four.max_closedness_residual < 1e-5 and three.max_identity_residual < 1e-5 and worst < 1e-5
    record(6, "divergence", ok,
           f"dim 4 closedness {four.max_closedness_residual:.2e}, dim 3 identity {three.max_identity_residual:.2e}, "
           f"all built-ins {worst:.2e}")


def harmonic_attractor():
    # first-harmonic longitude dependence: orbits precess, so the return map is not the identity
    def phi(v):
        return (v @ v) ** -1.5 + 0.3 * v[0] * (v @ v) ** -2.0

    return JacobiAttractor.from_phi(C, C, phi)


def equivariance_residual(fs, seeds=range(10)):
    frame = LeafFrame.for_field(fs)
    s = LeafState(1.2, 0.9, 0.3)
    first = return_map(fs, s, frame=frame, cfg=TIGHT)
    worst = 0.0
    for seed in seeds:
        g = random_transvection(frame.c, np.random.default_rng(seed))
        moved = return_map(fs, apply_g_to_leaf_state(g, frame, s), frame=frame, cfg=TIGHT).state
        expect = apply_g_to_leaf_state(g, frame, first.state)
        worst = max(worst, float(np.max(np.abs(moved.as_array() - expect.as_array()))))
    return worst, first.g.norm()


def test_criterion_07_g_equivariance():
    aniso, _ = equivariance_residual(JacobiAttractor.anisotropic(np.diag([1.0, 2.5, 1.0])))
    harmonic, omega = equivariance_residual(harmonic_attractor())
    record(7, "G-equivariance", aniso < 1e-6 and harmonic < 1e-6,
           f"residual {aniso:.2e} over 10 seeded elements (anisotropic), "
           f"{harmonic:.2e} (precessing attractor, |omega| {omega:.2f})")


def test_criterion_08_symmetry_group():
    # the cylinder's domain is preserved by the whole group, unlike a flat screen's
    traj = integrate(KEP, CylinderScreen(KEP.B), FRAME.projective(LeafState(1.2, 0.9, 0.3)), 8.0, TIGHT, t_eval=400)
    worst = 0.0
    for seed in range(5):
        worst = max(worst, symmetry_check_H(KEP, traj, random_transvection(C, np.random.default_rng(seed)).matrix))
        worst = max(worst, symmetry_check_H(KEP, traj, w_rotation(KEP, np.random.default_rng(100 + seed))))
    record(8, "symmetry group of the Kepler field", worst < 1e-7,
           f"residual {worst:.2e} over 5 transvections and 5 rotations")


def test_criterion_09_free_motion():
    worst_pi = 0.0
    great = None
    for s in (Z, SphereScreen(dim=3), CylinderScreen(KEP.B)):
        q = project_to_screen(s, [0.3, 0.2, 1.0]).coeffs
        v = np.array([0.4, -0.7, 0.2])
        v -= (s.gradient(q) @ v) * q
        traj = integrate(ZeroField(3), s, ScreenState(q, v, s), 5.0, TIGHT, t_eval=201)
        dev = np.max(np.linalg.norm(traj.pi - traj.pi[0], axis=1)) / np.linalg.norm(traj.pi[0])
        worst_pi = max(worst_pi, dev)
        if isinstance(s, SphereScreen):
            great = fit_plane(traj.q, through_origin=True)[2]
    ok = worst_pi < 1e-10 and great < 1e-9
    record(9, "free motion", ok, f"pi deviation {worst_pi:.2e}, great-circle residual {great:.2e}")


def test_criterion_10_dilation():
    s = LeafState(1.2, 0.9, 0.3)
    worst = 0.0
    for lam in (0.5, 2.0):
        d = dilation_map(s, lam)
        res = return_map(KEP, d, cfg=TIGHT)
        worst = max(worst, float(np.max(np.abs(res.state.as_array() - d.as_array()))))
    record(10, "dilation", worst < 1e-5, f"closure defect {worst:.2e} for lambda 0.5 and 2")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
