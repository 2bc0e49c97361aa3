"""Periodic uniform grids on the 2-torus, sampled fields, and discrete Fourier analysis.

The domain is [0, 2*pi)^2 with vertices x_i = i*dx, y_j = j*dy and no
duplicated seam point.  Field data is stored as (channels, ny, nx) arrays,
row-major with x fastest, so ``data[c, j, i]`` is the value at (x_i, y_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _hermite

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus.

    Both dimensions must be even and at least 4 (spectral symmetry).
    """

    nx: int
    ny: int

    def __post_init__(self):
        for n, name in ((self.nx, "nx"), (self.ny, "ny")):
            if n < 4 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 4, got {n}")

    @property
    def dx(self) -> float:
        return TWO_PI / self.nx

    @property
    def dy(self) -> float:
        return TWO_PI / self.ny

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def vertices(self) -> np.ndarray:
        """All grid vertices as an (ny*nx, 2) array, x fastest."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def wavenumbers(self):
        """Integer wavevector arrays (kx, ky), each of shape (ny, nx), fft layout."""
        kx = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        ky = np.fft.fftfreq(self.ny, d=1.0 / self.ny)
        return np.meshgrid(kx, ky)


@dataclass
class PeriodicField:
    """Uniformly sampled function on the torus.

    ``data`` has shape (channels, ny, nx); 1 channel for scalars, 2 for
    vector fields.  Entries must be finite.
    """

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3 or self.data.shape[1:] != (self.grid.ny, self.grid.nx):
            raise ValueError(
                f"data shape {self.data.shape} incompatible with grid "
                f"({self.grid.ny}, {self.grid.nx})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite entries")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "PeriodicField":
        """Sample ``fn(x, y)`` (broadcasting over meshgrid arrays) on the grid."""
        X, Y = np.meshgrid(grid.xs, grid.ys)
        vals = np.asarray(fn(X, Y), dtype=np.float64)
        if vals.ndim == 2:
            vals = vals[None]
        return cls(grid, vals)


@dataclass
class Spectrum:
    """Fourier coefficients c_k = (1/(nx*ny)) sum_x f(x) exp(-i k.x).

    ``coeffs`` has shape (channels, ny, nx) in numpy fft layout, so the
    wavevector of entry [c, j, i] is (fftfreq_x[i], fftfreq_y[j]) * n.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]


def dft(f: PeriodicField) -> Spectrum:
    """Forward transform with 1/(nx*ny) normalization on the coefficients."""
    if not np.all(np.isfinite(f.data)):
        raise ValueError("field contains non-finite entries")
    coeffs = np.fft.fft2(f.data, axes=(-2, -1)) / (f.grid.nx * f.grid.ny)
    return Spectrum(f.grid, coeffs)


def idft(spec: Spectrum) -> PeriodicField:
    """Inverse of :func:`dft`; imaginary round-off is discarded."""
    vals = np.fft.ifft2(spec.coeffs * (spec.grid.nx * spec.grid.ny), axes=(-2, -1))
    return PeriodicField(spec.grid, vals.real)


def effective_bandwidth(f: PeriodicField, eps: float) -> int:
    """Smallest R such that the spectral tail energy over |k| >= R is <= eps^2.

    |k| is the Euclidean wavevector norm.  Returns 0 when the total energy is
    already below eps^2.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if f.channels != 1:
        raise ValueError("effective_bandwidth expects a scalar field")
    spec = dft(f)
    kx, ky = f.grid.wavenumbers()
    kmag = np.hypot(kx, ky).ravel()
    energy = np.abs(spec.coeffs[0]).ravel() ** 2
    order = np.argsort(kmag)
    kmag = kmag[order]
    # tail[i] = energy at modes with |k| >= kmag[i]
    tail = np.cumsum(energy[order][::-1])[::-1]
    target = eps * eps
    if tail[0] <= target:
        return 0
    # find the largest |k| whose tail still exceeds eps^2; R is the next integer
    idx = np.nonzero(tail > target)[0][-1]
    return int(np.floor(kmag[idx])) + 1


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on a periodic grid of n points (n even)."""
    if n % 2 != 0:
        raise ValueError(f"Simpson quadrature needs an even grid, got {n}")
    w = np.full(n, 4.0)
    w[::2] = 2.0
    return w * (h / 3.0)


def simpson_integral(f: PeriodicField) -> float:
    """Integral of f over the torus by tensor-product composite Simpson.

    Periodic wraparound folds the repeated endpoint into the weight at
    index 0.  Exact for trigonometric polynomials of degree < n/2.
    """
    g = f.grid
    wx = simpson_weights(g.nx, g.dx)
    wy = simpson_weights(g.ny, g.dy)
    if f.channels != 1:
        raise ValueError("simpson_integral expects a scalar field")
    return float(wy @ f.data[0] @ wx)


def sample_bilinear(f: PeriodicField, points: np.ndarray) -> np.ndarray:
    """Periodic bilinear interpolation at arbitrary points.

    ``points`` is (n, 2); the result has shape (n,) for scalar fields and
    (channels, n) otherwise.  Output values are convex combinations of the
    stored samples, so the field's min/max are never exceeded.
    """
    pts = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite sample points")
    g = f.grid
    out = _hermite.bilinear_eval(
        f.data,
        g.dx,
        g.dy,
        g.nx,
        g.ny,
        np.ascontiguousarray(pts[:, 0]),
        np.ascontiguousarray(pts[:, 1]),
    )
    return out[0] if f.channels == 1 else out


def bilinear_sampler(f: PeriodicField):
    """Wrap a field as a ``points -> values`` callable."""
    return lambda pts: sample_bilinear(f, pts)


def as_sampler(u0):
    """Accept either a PeriodicField or a sampler callable."""
    if isinstance(u0, PeriodicField):
        return bilinear_sampler(u0)
    if callable(u0):
        return u0
    raise TypeError(f"cannot interpret {type(u0)!r} as a field sampler")


def energy_spectrum(vorticity: PeriodicField):
    """Shell-averaged kinetic energy spectrum from a scalar vorticity field.

    E(n) = (1/2) * sum_{n-1/2 <= |k| < n+1/2} |w_k|^2 / |k|^2 over unit-width
    shells centered at integers n = 1 .. min(nx, ny)/2 - 1; k = 0 excluded.
    Returns a list of (shell, energy) pairs.
    """
    if vorticity.channels != 1:
        raise ValueError("energy_spectrum expects a scalar field")
    spec = dft(vorticity)
    kx, ky = vorticity.grid.wavenumbers()
    k2 = kx * kx + ky * ky
    kmag = np.sqrt(k2)
    dens = np.abs(spec.coeffs[0]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(k2 > 0, dens / np.where(k2 > 0, k2, 1.0), 0.0)
    n_shells = min(vorticity.grid.nx, vorticity.grid.ny) // 2 - 1
    shells = []
    for n in range(1, n_shells + 1):
        mask = (kmag >= n - 0.5) & (kmag < n + 0.5)
        shells.append((n, 0.5 * float(np.sum(dens[mask]))))
    return shells


def spectral_gradient(grid: Grid, values: np.ndarray):
    """Partial derivatives (d/dx, d/dy) of vertex data by spectral differentiation."""
    c = np.fft.fft2(values)
    kx, ky = grid.wavenumbers()
    gx = np.fft.ifft2(1j * kx * c).real
    gy = np.fft.ifft2(1j * ky * c).real
    return gx, gy


def spectral_cross_derivative(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Mixed derivative d2/dxdy of vertex data by spectral differentiation."""
    c = np.fft.fft2(values)
    kx, ky = grid.wavenumbers()
    return np.fft.ifft2(-kx * ky * c).real
