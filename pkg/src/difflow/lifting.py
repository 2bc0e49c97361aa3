"""One-step lifting operators: field history -> spline diffeomorphism.

Three realizations: variational registration by gradient descent with an
Armijo line search, a trainable linear spectral model, and an oracle that
replays solver submaps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _hermite
from .diffeo import DiffeoMap, identity_map, map_from_displacement
from .grid import (
    Grid,
    PeriodicField,
    dft,
    spectral_cross_derivative,
    spectral_gradient,
)


class Lifter:
    """Interface: lift a window of fields to one displacement map.

    ``window`` is the number of history frames consumed; ``grid`` the output
    map's grid.  Implementations are deterministic functions of their inputs.
    """

    grid: Grid
    window: int
    kind: str = "abstract"

    def lift(self, history, step=None) -> DiffeoMap:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# variational registration


@dataclass
class RegistrationConfig:
    lambda_reg: float = 1e-3
    max_iters: int = 500
    step_init: float = 1.0
    armijo_c: float = 1e-4
    tol_rel: float = 1e-10
    multires_levels: int = 1

    def __post_init__(self):
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.multires_levels < 1:
            raise ValueError("multires_levels must be >= 1")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")


def hermite_field_planes(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Hermite data (value, d/dx, d/dy, d2/dxdy) of a sampled scalar field.

    Derivatives by spectral differentiation of the vertex values.
    """
    gx, gy = spectral_gradient(grid, values)
    return np.ascontiguousarray(
        np.stack([values, gx, gy, spectral_cross_derivative(grid, values)])
    )


def _hermite_sample(planes, grid, px, py):
    return _hermite.scalar_eval_grad(
        planes, grid.dx, grid.dy, grid.nx, grid.ny, px, py
    )


def registration_objective(v, src_planes, tgt_values, grid: Grid, lambda_reg: float):
    """Value and gradient of the registration energy over vertex displacements.

    v has shape (2, ny, nx); ``src_planes`` holds per-channel Hermite data
    (channels, 4, ny, nx) and ``tgt_values`` the matching (channels, ny, nx)
    samples.  The similarity term compares the target with the source's
    interpolant at the displaced vertices, summed over channels; the
    regularizer penalizes the spectral gradient of the displacement.
    """
    X, Y = np.meshgrid(grid.xs, grid.ys)
    px = np.ascontiguousarray((X + v[0]).ravel())
    py = np.ascontiguousarray((Y + v[1]).ravel())
    n = grid.nx * grid.ny
    value = 0.0
    grad = np.zeros_like(v)
    for c in range(src_planes.shape[0]):
        val, gx, gy = _hermite_sample(src_planes[c], grid, px, py)
        resid = tgt_values[c].ravel() - val
        value += float(np.sum(resid**2)) / n
        grad[0] += (-2.0 / n) * (resid * gx).reshape(grid.ny, grid.nx)
        grad[1] += (-2.0 / n) * (resid * gy).reshape(grid.ny, grid.nx)
    if lambda_reg > 0:
        kx, ky = grid.wavenumbers()
        k2 = kx * kx + ky * ky
        for c in range(2):
            F = np.fft.fft2(v[c])
            value += lambda_reg / n**2 * float(np.sum(k2 * np.abs(F) ** 2))
            grad[c] += (2.0 * lambda_reg / n) * np.fft.ifft2(k2 * F).real
    return value, grad


def _spectral_resample(values: np.ndarray, ny_out: int, nx_out: int) -> np.ndarray:
    """Band-limited restriction/prolongation of periodic vertex data."""
    ny, nx = values.shape
    c = np.fft.fftshift(np.fft.fft2(values)) / (ny * nx)
    out = np.zeros((ny_out, nx_out), dtype=complex)
    my, mx = min(ny, ny_out), min(nx, nx_out)
    ys = slice(ny_out // 2 - my // 2, ny_out // 2 + my // 2)
    xs = slice(nx_out // 2 - mx // 2, nx_out // 2 + mx // 2)
    src_y = slice(ny // 2 - my // 2, ny // 2 + my // 2)
    src_x = slice(nx // 2 - mx // 2, nx // 2 + mx // 2)
    out[ys, xs] = c[src_y, src_x]
    return np.fft.ifft2(np.fft.ifftshift(out) * (ny_out * nx_out)).real


def _descend(v, src_planes, tgt_values, grid, cfg: RegistrationConfig):
    value, grad = registration_objective(v, src_planes, tgt_values, grid, cfg.lambda_reg)
    history = [value]
    alpha = cfg.step_init
    converged = False
    if value == 0.0:
        return v, history, True
    for _ in range(cfg.max_iters):
        gnorm2 = float(np.sum(grad**2))
        if gnorm2 == 0.0:
            converged = True
            break
        accepted = False
        while alpha > 1e-16:
            v_trial = v - alpha * grad
            trial, grad_trial = registration_objective(
                v_trial, src_planes, tgt_values, grid, cfg.lambda_reg
            )
            if trial <= value - cfg.armijo_c * alpha * gnorm2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True  # no further descent possible at machine precision
            break
        rel_dec = (value - trial) / max(value, 1e-300)
        v, value, grad = v_trial, trial, grad_trial
        history.append(value)
        alpha *= 2.0
        if rel_dec < cfg.tol_rel:
            converged = True
            break
    return v, history, converged


def register_pair(u_src: PeriodicField, u_tgt: PeriodicField, cfg: RegistrationConfig):
    """Displacement map aligning u_src to u_tgt by energy minimization.

    Coarse-to-fine gradient descent with Armijo backtracking over the vertex
    displacement values; derivative planes of the returned map are
    synthesized spectrally.  Returns (map, report); non-convergence is
    reported, not raised.
    """
    if u_src.grid != u_tgt.grid:
        raise ValueError("source and target must share one grid")
    if u_src.channels != u_tgt.channels:
        raise ValueError("source and target must have equal channel counts")
    grid = u_src.grid
    levels = []
    n = min(grid.nx, grid.ny)
    for li in range(cfg.multires_levels - 1, -1, -1):
        factor = 2**li
        if n // factor < 8:
            continue
        levels.append(
            Grid(max(8, grid.nx // factor), max(8, grid.ny // factor))
        )
    if not levels or levels[-1] != grid:
        levels.append(grid)

    v = np.zeros((2, levels[0].ny, levels[0].nx))
    report = {"objective": [], "iterations": 0, "converged": True, "levels": []}
    for g in levels:
        if v.shape[1:] != (g.ny, g.nx):
            v = np.stack(
                [_spectral_resample(v[0], g.ny, g.nx), _spectral_resample(v[1], g.ny, g.nx)]
            )
        if g != grid:
            src = np.stack([_spectral_resample(ch, g.ny, g.nx) for ch in u_src.data])
            tgt = np.stack([_spectral_resample(ch, g.ny, g.nx) for ch in u_tgt.data])
        else:
            src, tgt = u_src.data, u_tgt.data
        src_planes = np.stack([hermite_field_planes(g, ch) for ch in src])
        v, history, converged = _descend(v, src_planes, tgt, g, cfg)
        report["levels"].append({"grid": (g.nx, g.ny), "objective": history})
        report["iterations"] += len(history) - 1
        report["converged"] = converged
    report["objective"] = report["levels"][-1]["objective"]
    if report["objective"][0] == 0.0:
        return identity_map(grid), report
    return map_from_displacement(grid, v[0], v[1]), report


class RegistrationLifter(Lifter):
    """Lifting by registering the latest frame against a reference trajectory.

    Registration needs the one-step target field, so this lifter is tied to
    a trajectory providing it; the step index selects the target frame.
    """

    kind = "registration"

    def __init__(self, trajectory, cfg: RegistrationConfig):
        self.trajectory = trajectory
        self.cfg = cfg
        self.grid = trajectory.grid
        self.window = 1

    def lift(self, history, step=None) -> DiffeoMap:
        if step is None:
            raise ValueError("registration lifting requires the step index")
        target = self.trajectory.frames[step + 1]
        m, _ = register_pair(history[-1], target, self.cfg)
        return m


class ConstantLifter(Lifter):
    """Emits one fixed map every step; models autonomous uniform motion."""

    kind = "constant"

    def __init__(self, m: DiffeoMap, window: int = 1):
        self.map = m
        self.grid = m.grid
        self.window = window

    def lift(self, history, step=None) -> DiffeoMap:
        return self.map


# ---------------------------------------------------------------------------
# oracle lifting


class OracleLifter(Lifter):
    """Replays the stored solver submaps; a perfect lifter for isolating
    rollout error."""

    kind = "oracle"

    def __init__(self, trajectory):
        if trajectory.submaps is None:
            raise ValueError("trajectory stores no submaps")
        self.submaps = trajectory.submaps
        self.grid = trajectory.grid
        self.window = 1

    def lift(self, history, step=None) -> DiffeoMap:
        if step is None:
            raise ValueError("oracle lifting requires the step index")
        if not 0 <= step < len(self.submaps):
            raise IndexError(f"no stored submap for step {step}")
        return self.submaps[step]


def oracle_lifter(trajectory) -> OracleLifter:
    return OracleLifter(trajectory)


# ---------------------------------------------------------------------------
# dataset construction


@dataclass
class PairDataset:
    """Sliding-window samples (input frames, target frame, optional submap)."""

    grid: Grid
    dt: float
    window: int
    samples: list = field(repr=False)

    def __len__(self):
        return len(self.samples)


def build_dataset(trajectories, window: int, train_frac: float = 0.8, seed: int = 0):
    """Sliding windows from trajectories, split by trajectory (never by frame).

    Returns (train, test) PairDatasets; the shuffle is seeded.  Trajectories
    with fewer than window + 1 frames are skipped with a warning.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    usable = []
    for tr in trajectories:
        if tr.n_frames < window + 1:
            warnings.warn(
                f"skipping trajectory with {tr.n_frames} frames < window + 1",
                RuntimeWarning,
            )
            continue
        usable.append(tr)
    if not usable:
        raise ValueError("no usable trajectories")
    grid = usable[0].grid
    dt = usable[0].dt_save
    for tr in usable:
        if tr.grid != grid or abs(tr.dt_save - dt) > 1e-12:
            raise ValueError("trajectories must share grid and frame spacing")
    order = np.random.default_rng(seed).permutation(len(usable))
    n_train = int(round(train_frac * len(usable)))

    def windows(tr):
        out = []
        for i in range(tr.n_frames - window):
            submap = None
            if tr.submaps is not None and i + window - 1 < len(tr.submaps):
                submap = tr.submaps[i + window - 1]
            out.append((tr.frames[i : i + window], tr.frames[i + window], submap))
        return out

    train_samples, test_samples = [], []
    for rank, idx in enumerate(order):
        (train_samples if rank < n_train else test_samples).extend(windows(usable[idx]))
    return (
        PairDataset(grid, dt, window, train_samples),
        PairDataset(grid, dt, window, test_samples),
    )


# ---------------------------------------------------------------------------
# linear spectral lifting


class SpectralLifter(Lifter):
    """Linear map from truncated input spectra to Hermite coefficients.

    Features are the real and imaginary parts of the Fourier modes with
    |k|_inf <= k_feat from each history frame, plus a constant bias; the
    weight matrix has shape (8 * nx * ny, n_features).
    """

    kind = "spectral"

    def __init__(self, grid: Grid, window: int, k_feat: int, ridge: float, weights):
        self.grid = grid
        self.window = window
        self.k_feat = int(min(k_feat, min(grid.nx, grid.ny) // 2 - 1))
        self.ridge = ridge
        self.weights = np.asarray(weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite weights")
        expected = (8 * grid.nx * grid.ny, self.n_features)
        if self.weights.shape != expected:
            raise ValueError(
                f"weights shape {self.weights.shape}, expected {expected}"
            )

    @property
    def n_modes(self) -> int:
        return (2 * self.k_feat + 1) ** 2

    @property
    def n_features(self) -> int:
        return 2 * self.window * self.n_modes + 1

    def features(self, history) -> np.ndarray:
        if len(history) != self.window:
            raise ValueError(
                f"history length {len(history)} != window {self.window}"
            )
        K = self.k_feat
        parts = []
        for f in history:
            if f.grid != self.grid:
                raise ValueError("history frame on wrong grid")
            c = np.fft.fftshift(dft(f).coeffs[0])
            cy, cx = self.grid.ny // 2, self.grid.nx // 2
            block = c[cy - K : cy + K + 1, cx - K : cx + K + 1].ravel()
            parts.append(block.real)
            parts.append(block.imag)
        parts.append(np.ones(1))
        return np.concatenate(parts)

    def lift(self, history, step=None) -> DiffeoMap:
        planes = (self.weights @ self.features(history)).reshape(
            2, 4, self.grid.ny, self.grid.nx
        )
        return DiffeoMap(self.grid, planes)


def _map_planes_vector(m: DiffeoMap) -> np.ndarray:
    return m.planes.ravel()


def fit_spectral_lifter(
    ds: PairDataset,
    k_feat: int,
    ridge: float,
    mode: str = "map-supervised",
    max_iters: int = 100,
    lambda_reg: float = 1e-3,
) -> SpectralLifter:
    """Fit the linear spectral lifter on a pair dataset.

    map-supervised solves ridge-regularized least squares against the target
    submaps (normal equations; the bias column is not penalized).
    field-mismatch refines the weights by Armijo gradient descent on the
    pullback mismatch plus a derivative-plane penalty.
    """
    if len(ds) == 0:
        raise ValueError("empty dataset")
    ridge = max(ridge, 1e-10)
    grid = ds.grid
    k_eff = int(min(k_feat, min(grid.nx, grid.ny) // 2 - 1))
    n_modes = (2 * k_eff + 1) ** 2
    n_feat = 2 * ds.window * n_modes + 1
    shell = SpectralLifter(
        grid, ds.window, k_eff, ridge, np.zeros((8 * grid.nx * grid.ny, n_feat))
    )
    X = np.stack([shell.features(inputs) for inputs, _, _ in ds.samples])

    have_maps = all(s[2] is not None for s in ds.samples)
    if mode not in ("map-supervised", "field-mismatch"):
        raise ValueError(f"unknown fit mode {mode!r}")
    if mode == "map-supervised" and not have_maps:
        raise ValueError("map-supervised fitting requires target submaps")

    if have_maps:
        Y = np.stack([_map_planes_vector(s[2]) for s in ds.samples])
        A = X.T @ X
        penalty = np.full(n_feat, ridge)
        penalty[-1] = 0.0  # bias column unpenalized
        A[np.diag_indices_from(A)] += penalty
        W = np.linalg.solve(A, X.T @ Y).T
    else:
        W = np.zeros((8 * grid.nx * grid.ny, n_feat))

    if mode == "field-mismatch":
        W = _refine_field_mismatch(ds, X, W, grid, lambda_reg, max_iters)
    return SpectralLifter(grid, ds.window, k_eff, ridge, W)


def _field_mismatch_cost_grad(ds, X, W, grid, lambda_reg, src_planes_cache):
    n = len(ds)
    nv = grid.nx * grid.ny
    X0, Y0 = np.meshgrid(grid.xs, grid.ys)
    cost = 0.0
    grad_w = np.zeros_like(W)
    for i, (inputs, target, _) in enumerate(ds.samples):
        planes = (W @ X[i]).reshape(2, 4, grid.ny, grid.nx)
        px = np.ascontiguousarray((X0 + planes[0, 0]).ravel())
        py = np.ascontiguousarray((Y0 + planes[1, 0]).ravel())
        val, gx, gy = _hermite_sample(src_planes_cache[i], grid, px, py)
        resid = target.data[0].ravel() - val
        cost += float(np.sum(resid**2)) / (n * nv)
        g_planes = np.zeros_like(planes)
        g_planes[0, 0] = (-2.0 / (n * nv)) * (resid * gx).reshape(grid.ny, grid.nx)
        g_planes[1, 0] = (-2.0 / (n * nv)) * (resid * gy).reshape(grid.ny, grid.nx)
        deriv = planes[:, 1:]
        cost += lambda_reg / (n * nv) * float(np.sum(deriv**2))
        g_planes[:, 1:] += (2.0 * lambda_reg / (n * nv)) * deriv
        grad_w += np.outer(g_planes.ravel(), X[i])
    return cost, grad_w


def _refine_field_mismatch(ds, X, W, grid, lambda_reg, max_iters):
    src_planes = [
        hermite_field_planes(grid, inputs[-1].data[0]) for inputs, _, _ in ds.samples
    ]
    cost, grad = _field_mismatch_cost_grad(ds, X, W, grid, lambda_reg, src_planes)
    alpha = 1.0
    for _ in range(max_iters):
        gnorm2 = float(np.sum(grad**2))
        if gnorm2 == 0.0:
            break
        accepted = False
        while alpha > 1e-16:
            W_trial = W - alpha * grad
            trial, grad_trial = _field_mismatch_cost_grad(
                ds, X, W_trial, grid, lambda_reg, src_planes
            )
            if trial <= cost - 1e-4 * alpha * gnorm2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        W, cost, grad = W_trial, trial, grad_trial
        alpha *= 2.0
    return W
