"""Characteristic-mapping reference solvers and initial-condition generators.

Ground-truth data generation: semi-Lagrangian backward-map integration for
linear advection with a prescribed velocity, and for the 2D incompressible
Euler equations with the velocity recovered spectrally from vorticity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .diffeo import (
    DiffeoMap,
    MapChain,
    chain_displacement,
    chain_evaluate,
    identity_map,
    stencil_points,
    stencil_to_planes,
)
from .grid import (
    TWO_PI,
    Grid,
    PeriodicField,
    as_sampler,
    dft,
    sample_bilinear,
)


class AnalyticVelocity:
    """Velocity sampler backed by a closed-form function ``fn(t, points)``.

    ``points`` is (n, 2); the function must return (n, 2) velocity vectors
    and handle periodicity itself (trigonometric expressions do naturally).
    """

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, t, points):
        v = np.asarray(self.fn(t, points), dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("velocity sampler produced non-finite values")
        return v


def constant_velocity(cx: float, cy: float) -> AnalyticVelocity:
    return AnalyticVelocity(
        lambda t, pts: np.column_stack(
            [np.full(len(pts), float(cx)), np.full(len(pts), float(cy))]
        )
    )


class GridVelocity:
    """Velocity sampler from stored frames: bilinear in space, linear in time.

    Outside the stored time range the two nearest frames are extrapolated
    linearly.  When flagged incompressible, every frame must be
    divergence-free to 1e-8 in the spectral norm.
    """

    def __init__(self, times, frames, incompressible: bool = False):
        self.times = np.asarray(times, dtype=np.float64)
        self.frames = list(frames)
        if len(self.times) != len(self.frames) or len(self.frames) == 0:
            raise ValueError("times and frames must be non-empty and aligned")
        if incompressible:
            for f in self.frames:
                div = spectral_divergence_norm(f)
                if div > 1e-8:
                    raise ValueError(
                        f"velocity frame not divergence-free: |div u| = {div:.3e}"
                    )

    def __call__(self, t, points):
        ts = self.times
        if len(ts) == 1:
            return sample_bilinear(self.frames[0], points).T
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        a = sample_bilinear(self.frames[i], points)
        b = sample_bilinear(self.frames[i + 1], points)
        return ((1.0 - w) * a + w * b).T


def spectral_divergence_norm(vel: PeriodicField) -> float:
    """L2 norm (coefficient Parseval) of the spectral divergence of a 2-channel field."""
    spec = dft(vel)
    kx, ky = vel.grid.wavenumbers()
    div = 1j * kx * spec.coeffs[0] + 1j * ky * spec.coeffs[1]
    return float(np.sqrt(np.sum(np.abs(div) ** 2)))


@dataclass
class Trajectory:
    """Snapshots of a solved evolution, with optional aligned submaps.

    ``frames[k]`` is the field at t = k * dt_save.  When ``submaps`` is
    present, submaps[j] is the backward map advancing frame j to frame j+1
    (requires dt_save to equal the remap interval).
    """

    grid: Grid
    dt_save: float
    frames: list = field(repr=False)
    submaps: list | None = field(default=None, repr=False)
    velocity_frames: list | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt_save <= 0:
            raise ValueError("dt_save must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def chain(self) -> MapChain:
        if self.submaps is None:
            raise ValueError("trajectory stores no submaps")
        return MapChain(self.grid, self.submaps)


def _rk3_backtrace(vel, t, dt, points):
    """Departure points of the backward characteristic over [t, t + dt].

    SSP-RK3 applied to dx/ds = v(s, x) integrated from s = t + dt down to
    s = t; the output is unwrapped (no mod), so the one-step displacement is
    continuous in the starting point.
    """
    k1 = vel(t + dt, points)
    k2 = vel(t, points - dt * k1)
    k3 = vel(t + 0.5 * dt, points - 0.25 * dt * (k1 + k2))
    return points - dt * (k1 + k2 + 4.0 * k3) / 6.0


def _advance_submap(submap: DiffeoMap, vel, t, dt, grid: Grid, fd_eps: float):
    """One micro step: submap <- submap o (one-step backward trace map)."""
    pts = stencil_points(grid, fd_eps)
    dep = _rk3_backtrace(vel, t, dt, pts)
    disp = dep - pts
    disp += chain_displacement(MapChain(grid, [submap]), dep)
    return DiffeoMap(grid, stencil_to_planes(disp, grid, fd_eps))


def _check_cfl(vel, t, dt, grid):
    v0 = vel(t, grid.vertices())
    vmax = float(np.max(np.abs(v0)))
    if vmax * dt > grid.dx:
        warnings.warn(
            f"CFL exceeded: max|v|*dt = {vmax * dt:.3e} > dx = {grid.dx:.3e}",
            RuntimeWarning,
        )


def _n_steps(t0, t1, dt):
    n = (t1 - t0) / dt
    n_int = int(round(n))
    if n_int < 1 or abs(n - n_int) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"dt = {dt} does not divide the interval [{t0}, {t1}]")
    return n_int


def integrate_backward_map(vel, t0, t1, dt, grid: Grid, fd_eps=None) -> DiffeoMap:
    """Backward flow submap over [t0, t1] by semi-Lagrangian RK3 tracing.

    Each micro step traces characteristics backward from the vertex stencil
    and reconstructs the composite displacement in the spline space.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if fd_eps is None:
        fd_eps = grid.dx / 100.0
    n = _n_steps(t0, t1, dt)
    _check_cfl(vel, t0, dt, grid)
    submap = identity_map(grid)
    for k in range(n):
        submap = _advance_submap(submap, vel, t0 + k * dt, dt, grid, fd_eps)
    return submap


def _frame_from_maps(maps, grid, u0_sampler, vertices):
    pos = chain_evaluate(MapChain(grid, maps), vertices)
    vals = np.asarray(u0_sampler(pos))
    return PeriodicField(grid, vals.reshape(grid.ny, grid.nx))


def advect_cmm(
    vel,
    u0_sampler,
    T,
    dt,
    remap_every,
    grid: Grid,
    fd_eps=None,
    save_every=1,
    metadata=None,
) -> Trajectory:
    """Characteristic-mapping advection with periodic remapping.

    The accumulated submap is appended to the composition chain every
    ``remap_every`` steps and restarted from the identity.  Frames are the
    initial field pulled back through the full chain at grid vertices, saved
    every ``save_every`` steps.
    """
    if fd_eps is None:
        fd_eps = grid.dx / 100.0
    if remap_every < 1 or save_every < 1:
        raise ValueError("remap_every and save_every must be >= 1")
    u0_sampler = as_sampler(u0_sampler)
    n_steps = _n_steps(0.0, T, dt)
    _check_cfl(vel, 0.0, dt, grid)
    vertices = grid.vertices()
    chain = MapChain(grid)
    working = identity_map(grid)
    frames = [_frame_from_maps([], grid, u0_sampler, vertices)]
    for n in range(n_steps):
        working = _advance_submap(working, vel, n * dt, dt, grid, fd_eps)
        if (n + 1) % remap_every == 0:
            chain = chain.appended(working)
            working = identity_map(grid)
            pending = []
        else:
            pending = [working]
        if (n + 1) % save_every == 0:
            frames.append(
                _frame_from_maps(chain.maps + pending, grid, u0_sampler, vertices)
            )
    if n_steps % remap_every != 0:
        chain = chain.appended(working)
    meta = {"solver": "advect_cmm", "dt": dt, "remap_every": remap_every}
    meta.update(metadata or {})
    return Trajectory(grid, dt * save_every, frames, submaps=chain.maps, metadata=meta)


def biot_savart(omega: PeriodicField) -> PeriodicField:
    """Divergence-free velocity from vorticity on the torus.

    With the convention omega = d(u_y)/dx - d(u_x)/dy, the spectral
    inversion is u_hat = (i k_y, -i k_x) * omega_hat / |k|^2, with the mean
    mode set to zero (the vorticity mean is subtracted first).
    """
    if omega.channels != 1:
        raise ValueError("biot_savart expects a scalar vorticity field")
    w = omega.data[0] - np.mean(omega.data[0])
    c = np.fft.fft2(w)
    kx, ky = omega.grid.wavenumbers()
    k2 = kx * kx + ky * ky
    k2safe = np.where(k2 > 0, k2, 1.0)
    ux = np.fft.ifft2(1j * ky * c / k2safe).real
    uy = np.fft.ifft2(-1j * kx * c / k2safe).real
    return PeriodicField(omega.grid, np.stack([ux, uy]))


def euler_cmm(
    omega0: PeriodicField,
    T,
    dt,
    remap_every,
    fd_eps=None,
    save_every=None,
    metadata=None,
) -> Trajectory:
    """Characteristic-mapping solver for 2D incompressible Euler.

    Vorticity is advanced as the pullback of the (zero-mean) initial field
    through the accumulated backward map; the advecting velocity comes from
    the Biot-Savart inversion of the current vorticity, extrapolated
    linearly in time from the two most recent frames during each RK3 trace.
    """
    grid = omega0.grid
    if fd_eps is None:
        fd_eps = grid.dx / 100.0
    if save_every is None:
        save_every = remap_every
    w0 = omega0.data[0] - np.mean(omega0.data[0])
    omega0 = PeriodicField(grid, w0)
    u0_sampler = as_sampler(omega0)
    n_steps = _n_steps(0.0, T, dt)
    vertices = grid.vertices()
    wmax0 = float(np.max(np.abs(w0)))

    chain = MapChain(grid)
    working = identity_map(grid)
    vel_prev = biot_savart(omega0)
    t_prev = 0.0
    vel_curr = vel_prev
    t_curr = 0.0
    _check_cfl(GridVelocity([0.0], [vel_curr]), 0.0, dt, grid)

    frames = [omega0]
    vel_frames = [vel_curr]
    for n in range(n_steps):
        t = n * dt
        if n == 0:
            sampler = GridVelocity([t_curr], [vel_curr])
        else:
            sampler = GridVelocity([t_prev, t_curr], [vel_prev, vel_curr])
        working = _advance_submap(working, sampler, t, dt, grid, fd_eps)
        if (n + 1) % remap_every == 0:
            chain = chain.appended(working)
            working = identity_map(grid)
            pending = []
        else:
            pending = [working]
        omega = _frame_from_maps(chain.maps + pending, grid, u0_sampler, vertices)
        wmax = float(np.max(np.abs(omega.data)))
        if wmax0 > 0 and wmax > 10.0 * wmax0:
            raise RuntimeError(
                f"instability detected at t = {t + dt:.4f}: "
                f"max|omega| = {wmax:.3e} exceeds 10x initial"
            )
        vel_prev, t_prev = vel_curr, t_curr
        vel_curr, t_curr = biot_savart(omega), t + dt
        if (n + 1) % save_every == 0:
            frames.append(omega)
            vel_frames.append(vel_curr)
    if n_steps % remap_every != 0:
        chain = chain.appended(working)
    meta = {"solver": "euler_cmm", "dt": dt, "remap_every": remap_every}
    meta.update(metadata or {})
    return Trajectory(
        grid,
        dt * save_every,
        frames,
        submaps=chain.maps,
        velocity_frames=vel_frames,
        metadata=meta,
    )


def random_vorticity(grid: Grid, K: int, seed: int) -> PeriodicField:
    """Random band-limited vorticity: sum over |k| <= K of a_k cos + b_k sin.

    Coefficients are Uniform[-1, 1] from a seeded generator; the mean mode is
    excluded, and one mode per {k, -k} pair is used (the redundant half-plane
    is dropped).  Reproducible per seed.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    X, Y = np.meshgrid(grid.xs, grid.ys)
    w = np.zeros((grid.ny, grid.nx))
    for kx in range(-K, K + 1):
        for ky in range(0, K + 1):
            if ky == 0 and kx <= 0:
                continue
            if kx * kx + ky * ky > K * K:
                continue
            a, b = rng.uniform(-1.0, 1.0, size=2)
            phase = kx * X + ky * Y
            w += a * np.cos(phase) + b * np.sin(phase)
    return PeriodicField(grid, w)


def slotted_cylinder(center, radius, slot_width, slot_depth):
    """Indicator of a slotted disk, evaluable at arbitrary points.

    The slot is a vertical strip of the given width cut upward from the
    bottom of the disk to depth ``slot_depth``.  Distances use the wrapped
    periodic metric, so the shape is well-defined anywhere on the torus.
    """
    cx, cy = float(center[0]), float(center[1])
    if not 0.0 < radius < np.pi:
        raise ValueError("radius must lie in (0, pi)")

    def sampler(points):
        pts = np.asarray(points, dtype=np.float64)
        ex = np.mod(pts[..., 0] - cx + np.pi, TWO_PI) - np.pi
        ey = np.mod(pts[..., 1] - cy + np.pi, TWO_PI) - np.pi
        inside = ex * ex + ey * ey <= radius * radius
        in_slot = (np.abs(ex) <= 0.5 * slot_width) & (ey <= -radius + slot_depth)
        return (inside & ~in_slot).astype(np.float64)

    return sampler
