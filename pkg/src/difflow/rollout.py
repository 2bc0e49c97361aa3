"""Autonomous time stepping by map composition.

A rollout owns a composition chain and a short window of recent frames.
Each step asks a lifting operator for the next one-step map, pushes it onto
the chain, and re-evaluates the current frame as the pullback of the initial
condition through the whole chain.  The state of the field is never advanced
directly; only maps are.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .diffeo import MapChain, chain_evaluate, chain_evaluate_det, project
from .grid import Grid, PeriodicField, as_sampler
from .lifting import Lifter
from .solvers import Trajectory

SCHEMES = ("compose", "project-each")


@dataclass
class RolloutConfig:
    dt: float
    remap_every: int = 10
    fd_eps: float | None = None
    scheme: str = "compose"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.remap_every < 1:
            raise ValueError("remap_every must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


def pullback_field(chain: MapChain, u0_sampler, grid_out: Grid) -> PeriodicField:
    """Evaluate u0 o chain at the vertices of ``grid_out``."""
    sampler = as_sampler(u0_sampler)
    vals = sampler(chain_evaluate(chain, grid_out.vertices()))
    vals = np.asarray(vals)
    if vals.ndim == 1:
        vals = vals[None]
    return PeriodicField(grid_out, vals.reshape(-1, grid_out.ny, grid_out.nx))


def transport_density(chain: MapChain, rho0_sampler, grid_out: Grid) -> PeriodicField:
    """Push a density through the chain: pullback weighted by det(D chain).

    Warns if the determinant is non-positive anywhere (orientation loss)."""
    sampler = as_sampler(rho0_sampler)
    positions, det = chain_evaluate_det(chain, grid_out.vertices())
    if np.any(det <= 0.0):
        warnings.warn(
            "non-positive Jacobian determinant in density transport",
            RuntimeWarning,
        )
    vals = np.asarray(sampler(positions)) * det
    if vals.ndim == 1:
        vals = vals[None]
    return PeriodicField(grid_out, vals.reshape(-1, grid_out.ny, grid_out.nx))


class RolloutState:
    """Mutable rollout state: the chain so far and the frame history window.

    ``chain`` holds consolidated maps; ``working`` holds the lifted maps
    accumulated since the last consolidation.  The frame history keeps the
    ``lifter.window`` most recent frames, padded with the initial frame.
    """

    def __init__(self, u0: PeriodicField, lifter: Lifter, config: RolloutConfig):
        if u0.grid != lifter.grid:
            raise ValueError("initial condition and lifter grids differ")
        self.grid = u0.grid
        self.lifter = lifter
        self.config = config
        self.u0_sampler = as_sampler(u0)
        self.chain = MapChain(self.grid)
        self.working: list = []
        self.history = deque(
            [u0] * max(1, lifter.window), maxlen=max(1, lifter.window)
        )
        self.frames = [u0]
        self.submaps: list = []
        self.step_index = 0

    def full_chain(self) -> MapChain:
        return MapChain(self.grid, self.chain.maps + self.working)

    def current_frame(self) -> PeriodicField:
        return self.frames[-1]

    def step(self) -> PeriodicField:
        """Advance one step: lift, compose, re-evaluate the frame."""
        m = self.lifter.lift(list(self.history), step=self.step_index)
        if m.grid != self.grid:
            raise ValueError("lifted map on wrong grid")
        self.submaps.append(m)
        cfg = self.config
        if cfg.scheme == "project-each":
            merged = project(
                MapChain(self.grid, self.working + [m]), self.grid, cfg.fd_eps
            )
            self.working = [merged]
        else:
            self.working.append(m)
        self.step_index += 1
        if self.step_index % cfg.remap_every == 0 and self.working:
            self.chain = self.chain.appended(
                project(MapChain(self.grid, self.working), self.grid, cfg.fd_eps)
            )
            self.working = []
        frame = pullback_field(self.full_chain(), self.u0_sampler, self.grid)
        self.frames.append(frame)
        self.history.append(frame)
        return frame

    def finalize_chain(self) -> MapChain:
        """Chain including any pending working maps, consolidated."""
        if not self.working:
            return self.chain
        return self.chain.appended(
            project(MapChain(self.grid, self.working), self.grid, self.config.fd_eps)
        )


def rollout(u0: PeriodicField, lifter: Lifter, n_steps: int, config: RolloutConfig):
    """Run ``n_steps`` of lifted time stepping from ``u0``.

    Returns (trajectory, chain).  The trajectory stores every frame at
    spacing config.dt and the per-step lifted maps as submaps; the chain is
    the consolidated composite backward map at the final time.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    state = RolloutState(u0, lifter, config)
    for _ in range(n_steps):
        state.step()
    traj = Trajectory(
        grid=u0.grid,
        dt_save=config.dt,
        frames=state.frames,
        submaps=state.submaps,
        metadata={
            "solver": "rollout",
            "lifter": lifter.kind,
            "scheme": config.scheme,
            "remap_every": config.remap_every,
            "dt": config.dt,
            "n_steps": n_steps,
        },
    )
    return traj, state.finalize_chain()
