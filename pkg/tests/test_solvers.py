import numpy as np
import pytest
from scipy.integrate import solve_ivp

from difflow.diffeo import MapChain, chain_displacement, displacement
from difflow.grid import Grid, PeriodicField, dft, sample_bilinear, simpson_integral
from difflow.solvers import (
    AnalyticVelocity,
    GridVelocity,
    Trajectory,
    advect_cmm,
    biot_savart,
    constant_velocity,
    euler_cmm,
    integrate_backward_map,
    random_vorticity,
    slotted_cylinder,
    spectral_divergence_norm,
)


def test_constant_velocity_translation():
    # backward map of a constant flow is an exact translation by -c*T
    g = Grid(32, 32)
    vel = constant_velocity(0.7, -0.3)
    m = integrate_backward_map(vel, 0.0, 0.5, 0.01, g)
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(200, 2))
    d = displacement(m, pts)
    assert np.max(np.abs(d[:, 0] + 0.35)) < 1e-10
    assert np.max(np.abs(d[:, 1] - 0.15)) < 1e-10


def test_backward_map_vs_ode_oracle():
    # steady shear v = (sin y, 0): compare against scipy characteristics
    g = Grid(64, 64)
    vel = AnalyticVelocity(
        lambda t, pts: np.column_stack([np.sin(pts[:, 1]), np.zeros(len(pts))])
    )
    T = 0.4
    m = integrate_backward_map(vel, 0.0, T, 0.005, g)
    pts = np.random.default_rng(1).uniform(0, 2 * np.pi, size=(30, 2))
    d = displacement(m, pts)
    for p, dp in zip(pts, d):
        sol = solve_ivp(
            lambda s, x: [np.sin(x[1]), 0.0],
            (T, 0.0),
            p,
            rtol=1e-12,
            atol=1e-12,
        )
        exact = sol.y[:, -1] - p
        assert np.max(np.abs(dp - exact)) < 5e-6


def test_full_period_return():
    # velocity (2*pi, 0) over unit time wraps once around the torus
    g = Grid(32, 32)
    traj = advect_cmm(
        constant_velocity(2 * np.pi, 0.0),
        lambda pts: np.sin(pts[..., 0]) * np.cos(pts[..., 1]),
        1.0,
        0.005,
        10,
        g,
        save_every=200,
    )
    assert np.max(np.abs(traj.frames[-1].data - traj.frames[0].data)) < 1e-8


def test_slotted_cylinder_geometry():
    sc = slotted_cylinder((np.pi, np.pi), 1.0, 0.3, 0.5)
    # center of disk is filled, slot region is cut
    assert sc(np.array([[np.pi, np.pi]]))[0] == 1.0
    assert sc(np.array([[np.pi, np.pi - 0.8]]))[0] == 0.0
    # outside
    assert sc(np.array([[np.pi + 1.5, np.pi]]))[0] == 0.0
    # wrapped copy of a point inside
    assert sc(np.array([[np.pi + 0.5 + 2 * np.pi, np.pi]]))[0] == 1.0
    with pytest.raises(ValueError):
        slotted_cylinder((0, 0), 4.0, 0.1, 0.1)


def test_slotted_cylinder_area():
    g = Grid(1024, 1024)
    r, w, d = 1.0, 0.3, 1.1
    f = PeriodicField.from_function(
        g,
        lambda x, y: slotted_cylinder((np.pi, np.pi), r, w, d)(
            np.stack([x, y], axis=-1)
        ),
    )
    area = simpson_integral(f)
    # disk minus slot strip; strip runs from the bottom rim up slot_depth,
    # chord-corrected area of the removed strip computed by quadrature
    ys = np.linspace(-r, -r + d, 20001)
    half = np.minimum(np.sqrt(np.maximum(r * r - ys**2, 0.0)), w / 2)
    slot = 2 * np.trapezoid(half, ys)
    assert area == pytest.approx(np.pi * r * r - slot, rel=0.02)


def test_biot_savart_round_trip():
    # curl of the recovered velocity reproduces the zero-mean vorticity
    g = Grid(64, 64)
    w = random_vorticity(g, 5, 3)
    u = biot_savart(w)
    c = dft(u).coeffs
    kx, ky = g.wavenumbers()
    curl = np.fft.ifft2((1j * kx * c[1] - 1j * ky * c[0]) * g.nx * g.ny).real
    assert np.max(np.abs(curl - (w.data[0] - np.mean(w.data[0])))) < 1e-10
    assert spectral_divergence_norm(u) < 1e-12


def test_biot_savart_single_mode():
    # omega = cos(k y) gives u = (-sin(k y)/k, 0): then dx(u_y) - dy(u_x) = omega
    g = Grid(32, 32)
    k = 3
    w = PeriodicField.from_function(g, lambda x, y: np.cos(k * y))
    u = biot_savart(w)
    X, Y = np.meshgrid(g.xs, g.ys)
    assert np.allclose(u.data[0], -np.sin(k * Y) / k, atol=1e-12)
    assert np.allclose(u.data[1], 0.0, atol=1e-12)


def test_grid_velocity_time_interpolation():
    g = Grid(16, 16)
    f0 = PeriodicField(g, np.zeros((2, 16, 16)))
    f1 = PeriodicField(g, np.ones((2, 16, 16)))
    vel = GridVelocity([0.0, 1.0], [f0, f1])
    pts = np.random.default_rng(2).uniform(0, 2 * np.pi, size=(10, 2))
    assert np.allclose(vel(0.25, pts), 0.25)
    # linear extrapolation beyond the stored range
    assert np.allclose(vel(1.5, pts), 1.5)
    with pytest.raises(ValueError):
        GridVelocity([0.0], [])


def test_grid_velocity_incompressible_check():
    g = Grid(32, 32)
    u = biot_savart(random_vorticity(g, 4, 0))
    GridVelocity([0.0], [u], incompressible=True)
    bad = PeriodicField.from_function(
        g, lambda x, y: np.stack([np.sin(x), np.zeros_like(x)])
    )
    with pytest.raises(ValueError):
        GridVelocity([0.0], [bad], incompressible=True)


def test_random_vorticity_properties():
    g = Grid(64, 64)
    w = random_vorticity(g, 4, 9)
    assert np.array_equal(w.data, random_vorticity(g, 4, 9).data)
    assert not np.array_equal(w.data, random_vorticity(g, 4, 10).data)
    # band limited: zero mean and no energy beyond |k| = K
    c = dft(w).coeffs[0]
    kx, ky = g.wavenumbers()
    assert abs(c[0, 0]) < 1e-14
    assert np.max(np.abs(c[np.hypot(kx, ky) > 4])) < 1e-14
    with pytest.raises(ValueError):
        random_vorticity(g, 0, 1)


def test_cfl_warning():
    g = Grid(16, 16)
    with pytest.warns(RuntimeWarning, match="CFL"):
        integrate_backward_map(constant_velocity(10.0, 0.0), 0.0, 0.2, 0.2, g)


def test_dt_must_divide_interval():
    g = Grid(16, 16)
    with pytest.raises(ValueError):
        integrate_backward_map(constant_velocity(1.0, 0.0), 0.0, 1.0, 0.3, g)
    with pytest.raises(ValueError):
        integrate_backward_map(constant_velocity(1.0, 0.0), 1.0, 0.5, 0.1, g)


def test_advect_submaps_compose_to_frames():
    # frames equal the pullback of u0 through the stored chain
    g = Grid(32, 32)
    vel = AnalyticVelocity(
        lambda t, pts: np.column_stack([np.sin(pts[:, 1]), np.cos(pts[:, 0])])
    )
    u0 = lambda pts: np.cos(pts[..., 0])
    traj = advect_cmm(vel, u0, 0.1, 0.01, 5, g, save_every=5)
    assert traj.n_frames == 3
    assert len(traj.submaps) == 2
    chain = traj.chain()
    pos = np.mod(
        chain_displacement(chain, g.vertices()) + g.vertices(), 2 * np.pi
    )
    recon = np.cos(pos[:, 0]).reshape(g.ny, g.nx)
    assert np.max(np.abs(recon - traj.frames[-1].data[0])) < 1e-12


def test_euler_steady_state_short():
    # omega = cos y is a steady Euler solution
    g = Grid(32, 32)
    w0 = PeriodicField.from_function(g, lambda x, y: np.cos(y))
    traj = euler_cmm(w0, 0.1, 0.005, 5)
    err = np.max(np.abs(traj.frames[-1].data - w0.data))
    assert err < 1e-5


def test_euler_conserves_enstrophy_short():
    g = Grid(64, 64)
    w0 = random_vorticity(g, 3, 2)
    traj = euler_cmm(w0, 0.05, 0.005, 5)
    z0 = simpson_integral(
        PeriodicField(g, traj.frames[0].data[0] ** 2)
    )
    z1 = simpson_integral(
        PeriodicField(g, traj.frames[-1].data[0] ** 2)
    )
    # bilinear resampling of the pullback is mildly dissipative, never amplifying
    assert z1 <= z0 * (1.0 + 1e-10)
    assert z1 >= 0.97 * z0


def test_trajectory_validation():
    g = Grid(16, 16)
    f = PeriodicField(g, np.zeros((16, 16)))
    with pytest.raises(ValueError):
        Trajectory(g, 0.0, [f])
    t = Trajectory(g, 0.1, [f])
    assert t.n_frames == 1
    with pytest.raises(ValueError):
        t.chain()


def test_analytic_velocity_rejects_nonfinite():
    vel = AnalyticVelocity(lambda t, pts: np.full_like(pts, np.nan))
    with pytest.raises(ValueError):
        vel(0.0, np.zeros((3, 2)))
