"""Quantitative checks on composition chains and rolled-out fields.

Covers integral conservation under pullback, bandwidth growth of pulled-back
fields against the analytic composition bound, cross-resolution agreement of
chain evaluation, energy-spectrum slopes, and simple field error measures.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .diffeo import MapChain, chain_displacement, chain_evaluate, chain_evaluate_det
from .grid import (
    Grid,
    PeriodicField,
    as_sampler,
    dft,
    effective_bandwidth,
    simpson_integral,
)


class DiagnosticsReport:
    """Named time series of scalar metrics with delimited-text export."""

    def __init__(self):
        self.series: dict[str, list] = {}

    def add(self, name: str, t: float, value: float):
        self.series.setdefault(name, []).append((float(t), float(value)))

    def add_series(self, name: str, pairs):
        for t, v in pairs:
            self.add(name, t, v)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("metric,t,value\n")
            for name, pairs in self.series.items():
                for t, v in pairs:
                    fh.write(f"{name},{t:.17g},{v:.17g}\n")


def conservation_error(chain: MapChain, a0_sampler, quad_grid: Grid) -> float:
    """Integral defect of the transported density (a0 o phi) det(D phi).

    By change of variables this integral equals the integral of a0 for any
    diffeomorphism, so the defect measures quadrature error plus the spline
    map's deviation from an exact diffeomorphism.  Both integrals use
    periodic Simpson quadrature on ``quad_grid``; the signed defect is
    returned (normalize externally if needed).
    """
    sampler = as_sampler(a0_sampler)
    verts = quad_grid.vertices()
    pos, det = chain_evaluate_det(chain, verts)
    a_now = np.asarray(sampler(pos)) * det
    a_init = np.asarray(sampler(np.mod(verts, 2.0 * np.pi)))
    shape = (quad_grid.ny, quad_grid.nx)
    I_now = simpson_integral(PeriodicField(quad_grid, a_now.reshape(shape)))
    I_init = simpson_integral(PeriodicField(quad_grid, a_init.reshape(shape)))
    return I_now - I_init


def lemma1_bound(L: float, eps: float, C1: float, C2: float, k: int) -> float:
    """Analytic bandwidth bound for a band-limited field pulled back through
    k maps.

    L is the bandwidth of the initial field, C1 the largest single-map
    displacement L2 norm, C2 the largest sup norm over suffix compositions.
    The C2 -> 0 limit is k * L * (1 + log(C1 / eps)).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if C1 <= 0 or eps <= 0:
        raise ValueError("C1 and eps must be positive")
    base = L * (1.0 + math.log(C1 / eps))
    if C2 <= 0.0:
        return k * base
    return base * ((1.0 + C2 * L) ** k - 1.0) / (L * C2)


def chain_constants(chain: MapChain, sample_grid: Grid | None = None):
    """Measured (C1, C2) of a chain.

    C1 is the largest per-map displacement L2 norm (coefficient Parseval of
    the value planes); C2 the largest sup norm of the displacement of any
    suffix composition of length >= 2, sampled at grid vertices.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    if sample_grid is None:
        sample_grid = chain.grid
    C1 = 0.0
    for m in chain:
        spec = dft(PeriodicField(m.grid, m.planes[:, 0]))
        C1 = max(C1, float(np.sqrt(np.sum(np.abs(spec.coeffs) ** 2))))
    C2 = 0.0
    verts = sample_grid.vertices()
    for j in range(1, len(chain)):
        disp = chain_displacement(chain[j:], verts)
        C2 = max(C2, float(np.max(np.hypot(disp[:, 0], disp[:, 1]))))
    return C1, C2


def bandwidth_study(chain: MapChain, eps: float, L: int, sample_n: int = 1024):
    """Measured versus bounded bandwidth of composite displacements.

    For each prefix of the chain, the composite displacement is sampled
    densely on a sample_n^2 grid and its effective bandwidth measured per
    component (the larger is reported); the bound is :func:`lemma1_bound`
    with the chain's measured constants and per-map displacement bandwidth
    L.  Returns a list of (k, measured, bound) triples.  The sampling grid
    should exceed 4x the expected bandwidth to keep aliasing out of the
    tail sum.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    fine = Grid(sample_n, sample_n)
    verts = fine.vertices()
    C1, C2 = chain_constants(chain)
    out = []
    for k in range(1, len(chain) + 1):
        disp = chain_displacement(chain[:k], verts)
        measured = max(
            effective_bandwidth(
                PeriodicField(fine, disp[:, c].reshape(fine.ny, fine.nx)), eps
            )
            for c in range(2)
        )
        out.append((k, measured, lemma1_bound(L, eps, C1, C2, k)))
    return out


def resolution_consistency_check(
    chain: MapChain, coarse: Grid, fine: Grid
) -> float:
    """Largest disagreement of the chain displacement at shared vertices.

    ``fine`` must be a vertex refinement of ``coarse`` (equal integer
    stride in each direction); the chain itself is resolution-independent,
    so evaluation at coincident points must agree to round-off.
    """
    if fine.nx % coarse.nx != 0 or fine.ny % coarse.ny != 0:
        raise ValueError("fine grid must refine the coarse grid")
    d_coarse = chain_displacement(chain, coarse.vertices())
    d_fine = chain_displacement(chain, fine.vertices())
    rx, ry = fine.nx // coarse.nx, fine.ny // coarse.ny
    d_fine = d_fine.reshape(fine.ny, fine.nx, 2)[::ry, ::rx].reshape(-1, 2)
    return float(np.max(np.abs(d_fine - d_coarse)))


def spectrum_slope(series, k_min: float, k_max: float) -> float:
    """Log-log least-squares slope of an energy spectrum over [k_min, k_max].

    Non-positive entries are excluded with a warning."""
    ks, es = [], []
    for k, e in series:
        if not k_min <= k <= k_max:
            continue
        if e <= 0.0:
            warnings.warn(f"excluding non-positive spectrum entry at k = {k}")
            continue
        ks.append(k)
        es.append(e)
    if len(ks) < 2:
        raise ValueError("need at least two usable spectrum points in range")
    return float(np.polyfit(np.log(ks), np.log(es), 1)[0])


def mse(a: PeriodicField, b: PeriodicField) -> float:
    """Mean squared pointwise difference of two fields on the same grid."""
    if a.grid != b.grid or a.data.shape != b.data.shape:
        raise ValueError("fields must share grid and shape")
    return float(np.mean((a.data - b.data) ** 2))


def extrema_error(u: PeriodicField, u0: PeriodicField):
    """How far u exceeds the initial field's range: (undershoot, overshoot).

    Both are non-negative; (0, 0) means the discrete maximum principle held.
    """
    lo = max(0.0, float(np.min(u0.data) - np.min(u.data)))
    hi = max(0.0, float(np.max(u.data) - np.max(u0.data)))
    return lo, hi
