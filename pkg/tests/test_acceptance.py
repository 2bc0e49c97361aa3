"""End-to-end acceptance checks.

Each test prints one ``ACCEPTANCE n: PASS/FAIL`` line with the measured
quantities, then asserts.  Run with ``pytest -s`` to see the lines inline.
"""

import numpy as np
import pytest

from difflow.diagnostics import (
    bandwidth_study,
    conservation_error,
    extrema_error,
    lemma1_bound,
    resolution_consistency_check,
    spectrum_slope,
)
from difflow.diffeo import (
    MapChain,
    displacement,
    map_from_displacement,
    random_map,
    translation_map,
)
from difflow.grid import (
    Grid,
    PeriodicField,
    energy_spectrum,
    sample_bilinear,
    simpson_integral,
)
from difflow.lifting import (
    ConstantLifter,
    OracleLifter,
    RegistrationConfig,
    build_dataset,
    fit_spectral_lifter,
    hermite_field_planes,
    register_pair,
    registration_objective,
)
from difflow.rollout import RolloutConfig, pullback_field, rollout
from difflow.solvers import (
    advect_cmm,
    constant_velocity,
    euler_cmm,
    random_vorticity,
    slotted_cylinder,
)


def _report(n, ok, detail):
    print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_acceptance_01_interpolation_order():
    # quartic spline convergence for v = (sin x cos 2y, 0)
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(20000, 2))
    exact = np.sin(pts[:, 0]) * np.cos(2 * pts[:, 1])
    errs = {}
    for n in (32, 64):
        g = Grid(n, n)
        X, Y = np.meshgrid(g.xs, g.ys)
        m = map_from_displacement(g, np.sin(X) * np.cos(2 * Y), np.zeros_like(X))
        errs[n] = np.max(np.abs(displacement(m, pts)[:, 0] - exact))
    ratio = errs[32] / errs[64]
    _report(1, ratio >= 14.0, f"L-inf error ratio 32^2/64^2 = {ratio:.2f}, need >= 14")


def test_acceptance_02_resolution_consistency():
    g = Grid(64, 64)
    worst = 0.0
    for trial in range(10):
        maps = [random_map(g, 4, 0.1, 100 * trial + s) for s in range(5)]
        chain = MapChain(g, maps)
        dev = resolution_consistency_check(chain, Grid(64, 64), Grid(256, 256))
        worst = max(worst, dev)
    _report(2, worst < 1e-13, f"max cross-resolution deviation = {worst:.3e}, need < 1e-13")


@pytest.mark.slow
def test_acceptance_03_conservation():
    g = Grid(128, 128)
    w0 = random_vorticity(g, 4, 1)
    traj = euler_cmm(w0, 1.0, 1e-3, 10)
    chain = traj.chain()
    a0 = PeriodicField(g, w0.data[0] ** 2)

    def a0_sampler(pts):
        return sample_bilinear(w0, np.mod(pts, 2 * np.pi)) ** 2

    norm = simpson_integral(PeriodicField(g, np.abs(a0.data[0])))
    errs = [
        abs(conservation_error(chain, a0_sampler, Grid(n, n))) / norm
        for n in (256, 512, 1024)
    ]
    ok = errs[1] < 1e-4 and errs[0] > errs[1] > errs[2]
    _report(
        3,
        ok,
        f"relative conservation error 256/512/1024 = "
        f"{errs[0]:.2e}/{errs[1]:.2e}/{errs[2]:.2e}, need < 1e-4 at 512 and decreasing",
    )


@pytest.mark.slow
def test_acceptance_04_non_diffusive_slotted_cylinder():
    # translation lifter, two grid cells per step (even shifts keep the
    # alternating Simpson weight pattern aligned): 1000 steps over T = 10
    g = Grid(64, 64)
    sc = slotted_cylinder((np.pi, np.pi), 1.0, 0.3, 1.1)
    u0 = PeriodicField.from_function(
        g, lambda x, y: sc(np.stack([x, y], axis=-1))
    )
    lifter = ConstantLifter(translation_map(g, (2 * g.dx, 0.0)))
    traj, _ = rollout(u0, lifter, 1000, RolloutConfig(dt=0.01, remap_every=10))
    worst_extrema = (0.0, 0.0)
    masses = []
    for f in traj.frames:
        lo, hi = extrema_error(f, u0)
        worst_extrema = (max(worst_extrema[0], lo), max(worst_extrema[1], hi))
        masses.append(simpson_integral(f))
    drift = (max(masses) - min(masses)) / masses[0]
    ok = worst_extrema == (0.0, 0.0) and drift < 0.01
    _report(
        4,
        ok,
        f"extrema error = {worst_extrema}, need exactly (0, 0); "
        f"mass drift = {drift:.2e}, need < 1%",
    )


@pytest.mark.slow
def test_acceptance_05_bandwidth_bound():
    # maps on 128^2 so the spline's own spectral tail sits below eps = 1e-6
    g = Grid(128, 128)
    eps, L = 1e-6, 8
    ok = True
    detail = []
    for trial in range(3):
        maps = [random_map(g, L, 0.1, 1000 + 10 * trial + s) for s in range(5)]
        chain = MapChain(g, maps)
        rows = bandwidth_study(chain, eps, L, sample_n=512)
        measured = [m for _, m, _ in rows]
        bounds = [b for _, _, b in rows]
        ok &= all(m <= b for m, b in zip(measured, bounds))
        ok &= measured == sorted(measured)
        detail.append(f"trial {trial}: measured {measured}, bounds [{bounds[0]:.0f}..{bounds[-1]:.0f}]")
    _report(5, ok, "; ".join(detail))


@pytest.mark.slow
def test_acceptance_06_euler_steady_state():
    g = Grid(64, 64)
    w0 = PeriodicField.from_function(g, lambda x, y: np.cos(y))
    traj = euler_cmm(w0, 1.0, 1e-3, 10)
    diff = traj.frames[-1].data[0] - w0.data[0]
    rel = np.sqrt(np.mean(diff**2)) / np.sqrt(np.mean(w0.data[0] ** 2))
    _report(6, rel < 1e-3, f"relative L2 vorticity error = {rel:.2e}, need < 1e-3")


def test_acceptance_07_registration_lifting():
    # multi-channel coordinate embedding makes the data term act
    # transversally; the synthetic deformation is recovered pointwise
    g = Grid(64, 64)
    X, Y = np.meshgrid(g.xs, g.ys)
    vx = 0.05 * np.sin(X) * np.sin(Y)
    vy = 0.05 * np.cos(X) * np.sin(Y)
    src = PeriodicField(
        g, np.stack([np.cos(X), np.sin(X), np.cos(Y), np.sin(Y)])
    )
    tgt = PeriodicField(
        g,
        np.stack(
            [
                np.cos(X + vx),
                np.sin(X + vx),
                np.cos(Y + vy),
                np.sin(Y + vy),
            ]
        ),
    )
    cfg = RegistrationConfig(lambda_reg=1e-6, max_iters=500, tol_rel=1e-14)
    m, report = register_pair(src, tgt, cfg)
    err = max(
        float(np.max(np.abs(m.planes[0, 0] - vx))),
        float(np.max(np.abs(m.planes[1, 0] - vy))),
    )
    obj = report["objective"]
    monotone = all(b <= a for a, b in zip(obj, obj[1:]))

    # analytic gradient against a directional finite difference on 16^2
    g16 = Grid(16, 16)
    rng = np.random.default_rng(1)
    src16 = PeriodicField.from_function(
        g16, lambda x, y: np.stack([np.cos(x), np.sin(x), np.cos(y), np.sin(y)])
    )
    planes16 = np.stack([hermite_field_planes(g16, ch) for ch in src16.data])
    X16, Y16 = np.meshgrid(g16.xs, g16.ys)
    tgt16 = np.stack(
        [
            np.cos(X16 + 0.1),
            np.sin(X16 + 0.1),
            np.cos(Y16 - 0.05),
            np.sin(Y16 - 0.05),
        ]
    )
    v = 0.05 * rng.standard_normal((2, 16, 16))
    _, grad = registration_objective(v, planes16, tgt16, g16, 1e-3)
    h = 1e-6
    direction = rng.standard_normal(v.shape)
    direction /= np.sqrt(np.sum(direction**2))
    jp, _ = registration_objective(v + h * direction, planes16, tgt16, g16, 1e-3)
    jm, _ = registration_objective(v - h * direction, planes16, tgt16, g16, 1e-3)
    grad_rel = abs((jp - jm) / (2 * h) - float(np.sum(grad * direction))) / abs(
        (jp - jm) / (2 * h)
    )
    ok = err < 1e-3 and monotone and grad_rel < 1e-6
    _report(
        7,
        ok,
        f"displacement L-inf error = {err:.2e} (need < 1e-3), monotone = {monotone}, "
        f"gradient check rel = {grad_rel:.2e} (need < 1e-6)",
    )


@pytest.mark.slow
def test_acceptance_08_learned_constant_lifting():
    # backward submaps of velocity (-2pi, 0) displace by exactly +2pi*dt
    g = Grid(64, 64)
    dt = 1e-3
    trajs = [
        advect_cmm(
            constant_velocity(-2 * np.pi, 0.0),
            lambda pts, s=s: np.cos(pts[..., 0] + 0.4 * s) * np.sin(pts[..., 1]),
            0.02,
            dt,
            1,
            g,
        )
        for s in range(4)
    ]
    train, test = build_dataset(trajs, window=1, train_frac=0.75, seed=0)
    lifter = fit_spectral_lifter(train, k_feat=1, ridge=1e-8)
    errs = []
    for inputs, _, _ in test.samples:
        pred = lifter.lift(inputs)
        errs.append(
            max(
                float(np.max(np.abs(pred.planes[0, 0] - 2 * np.pi * dt))),
                float(np.max(np.abs(pred.planes[1, 0]))),
                float(np.max(np.abs(pred.planes[:, 1:]))),
            )
        )
    held_out = max(errs)

    # full-period rollout: 1000 steps of dt = 1e-3 return to the start
    u0 = PeriodicField.from_function(g, lambda x, y: np.cos(x) * np.sin(y))
    traj, _ = rollout(u0, lifter, 1000, RolloutConfig(dt=dt, remap_every=10))
    ret = float(np.mean((traj.frames[-1].data - u0.data) ** 2))
    # bilinear interpolation error bound for this u0 at 64^2
    bilinear_tol = (2 * (g.dx**2 / 8.0)) ** 2
    ok = held_out < 1e-6 and ret < bilinear_tol
    _report(
        8,
        ok,
        f"held-out displacement error = {held_out:.2e} (need < 1e-6), "
        f"return MSE after 1000 steps = {ret:.2e} (need < {bilinear_tol:.2e})",
    )


@pytest.mark.slow
def test_acceptance_09_cascade_scaling():
    g = Grid(128, 128)
    w0 = random_vorticity(g, 10, 7)
    traj = euler_cmm(w0, 4.0, 1e-3, 10)
    chain = traj.chain()
    fine = Grid(512, 512)
    w_late = pullback_field(chain, traj.frames[0], fine)
    slope = spectrum_slope(energy_spectrum(w_late), 8, 40)
    ok = -3.8 <= slope <= -2.3
    _report(
        9,
        ok,
        f"late-time spectrum slope over k in [8, 40] = {slope:.3f}, need in [-3.8, -2.3]",
    )


@pytest.mark.slow
def test_acceptance_10_error_saturation():
    g = Grid(64, 64)
    dt = 0.01
    trajs = []
    for seed in (3, 4, 5, 6):
        w0 = random_vorticity(g, 4, seed)
        w0 = PeriodicField(g, w0.data[0] / np.max(np.abs(w0.data)))
        trajs.append(euler_cmm(w0, 1.2, dt, 1))
    train, test = build_dataset(trajs, window=5, train_frac=0.75, seed=0)
    lifter = fit_spectral_lifter(train, k_feat=1, ridge=1e-6)

    ref = trajs[0]
    traj, _ = rollout(
        ref.frames[0], lifter, 100, RolloutConfig(dt=dt, remap_every=10)
    )
    errs = [
        float(np.mean((traj.frames[k].data - ref.frames[k].data) ** 2))
        for k in range(101)
    ]
    finite = all(np.isfinite(errs))
    ratio = errs[100] / errs[25]
    ok = finite and ratio <= 5.0
    _report(
        10,
        ok,
        f"rollout MSE at step 25 = {errs[25]:.2e}, step 100 = {errs[100]:.2e}, "
        f"ratio = {ratio:.2f} (need <= 5, finite = {finite})",
    )
