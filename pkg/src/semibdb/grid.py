"""Periodic phase-space grid and the spectral kernels that act on it.

Phase-space arrays are laid out as ``(x_1, ..., x_d, p_1, ..., p_d)``; spatial
arrays carry only the ``x`` axes and momentum arrays only the ``p`` axes. The
momentum torus always has unit period, the spatial box has period ``Lx`` on
every axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from semibdb.errors import InvalidGrid

__all__ = [
    "PhaseGrid",
    "build_grid",
    "wavenumbers",
    "spectral_derivative",
    "fourier_phase_shift",
    "torus_quadrature",
    "dealias",
]

MOMENTUM_PERIOD = 1.0


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def wavenumbers(n: int, length: float) -> np.ndarray:
    """Angular wavenumbers ``2*pi*m/length`` in numpy FFT order."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform tensor grid on ``T^d_x x T^d_p``."""

    d: int
    Nx: int
    Np: int
    Lx: float = 1.0
    Lp: float = field(default=MOMENTUM_PERIOD, init=False)

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dp(self) -> float:
        return self.Lp / self.Np

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    @property
    def p(self) -> np.ndarray:
        return np.arange(self.Np) * self.dp

    @property
    def kx(self) -> np.ndarray:
        return wavenumbers(self.Nx, self.Lx)

    @property
    def kp(self) -> np.ndarray:
        return wavenumbers(self.Np, self.Lp)

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d))

    @property
    def p_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d, 2 * self.d))

    @property
    def space_shape(self) -> tuple[int, ...]:
        return (self.Nx,) * self.d

    @property
    def momentum_shape(self) -> tuple[int, ...]:
        return (self.Np,) * self.d

    @property
    def phase_shape(self) -> tuple[int, ...]:
        return self.space_shape + self.momentum_shape

    def x_mesh(self, i: int = 0, phase: bool = True) -> np.ndarray:
        """Coordinate ``x_{i+1}`` broadcastable against phase (or spatial) arrays."""
        ndim = 2 * self.d if phase else self.d
        shape = [1] * ndim
        shape[i] = self.Nx
        return self.x.reshape(shape)

    def p_mesh(self, i: int = 0, phase: bool = True) -> np.ndarray:
        """Coordinate ``p_{i+1}`` broadcastable against phase (or momentum) arrays."""
        ndim = 2 * self.d if phase else self.d
        offset = self.d if phase else 0
        shape = [1] * ndim
        shape[offset + i] = self.Np
        return self.p.reshape(shape)

    def integrate_p(self, values: np.ndarray) -> np.ndarray:
        """Integral over the unit momentum torus of a phase-space (or momentum) array."""
        axes = tuple(range(values.ndim - self.d, values.ndim))
        return torus_quadrature(values, axes, MOMENTUM_PERIOD)

    def integrate_x(self, values: np.ndarray) -> np.ndarray:
        """Integral over the spatial box of the leading ``d`` axes."""
        return torus_quadrature(values, self.x_axes, self.Lx)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.integrate_x(self.integrate_p(values)))

    def ddx(self, values: np.ndarray, i: int = 0, order: int = 1) -> np.ndarray:
        """Spectral ``d/dx_{i+1}`` of a phase-space or spatial array."""
        return spectral_derivative(values, i, order, self.Lx)

    def ddp(self, values: np.ndarray, i: int = 0, order: int = 1) -> np.ndarray:
        """Spectral ``d/dp_{i+1}`` of a phase-space or momentum array."""
        axis = values.ndim - self.d + i
        return spectral_derivative(values, axis, order, self.Lp)


def build_grid(d: int, Nx: int, Np: int, Lx: float = 1.0) -> PhaseGrid:
    if d not in (1, 2):
        raise InvalidGrid(f"unsupported dimension d={d}; expected 1 or 2")
    for name, n in (("Nx", Nx), ("Np", Np)):
        if not isinstance(n, (int, np.integer)) or n < 8 or not _is_pow2(int(n)):
            raise InvalidGrid(f"{name}={n} must be a power of two >= 8")
    if not np.isfinite(Lx) or Lx <= 0:
        raise InvalidGrid(f"Lx={Lx} must be positive")
    return PhaseGrid(d=int(d), Nx=int(Nx), Np=int(Np), Lx=float(Lx))


def _axis_multiplier(k: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = k.size
    return k.reshape(shape)


def spectral_derivative(
    values: np.ndarray, axis: int, order: int = 1, length: float = 1.0
) -> np.ndarray:
    """``order``-th derivative along ``axis`` via the multiplier ``(ik)^order``.

    Exact for band-limited data. For odd orders the Nyquist mode is dropped, since
    its derivative is not representable by a real grid function.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    k = np.fft.rfftfreq(n, d=length / n) * 2.0 * np.pi
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0
    coeffs = np.fft.rfft(values, axis=axis)
    coeffs *= _axis_multiplier(mult, axis, values.ndim)
    return np.fft.irfft(coeffs, n=n, axis=axis)


def fourier_phase_shift(
    values: np.ndarray, axis: int, shift, length: float = 1.0
) -> np.ndarray:
    """Translate every 1-D line along ``axis``: returns ``values(..., xi - s, ...)``.

    ``shift`` broadcasts against ``values`` with ``axis`` collapsed to size one, so
    each line may be moved by its own amount.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    k = _axis_multiplier(np.fft.rfftfreq(n, d=length / n) * 2.0 * np.pi, axis, values.ndim)
    s = np.asarray(shift, dtype=float)
    if s.ndim:
        s = np.expand_dims(s, axis) if s.ndim == values.ndim - 1 else s
    coeffs = np.fft.rfft(values, axis=axis)
    coeffs *= np.exp(-1j * k * s)
    return np.fft.irfft(coeffs, n=n, axis=axis)


def torus_quadrature(values: np.ndarray, axes: int | Iterable[int], length: float | Sequence[float] = 1.0):
    """Rectangle rule ``(L/N) * sum`` over the given axes; spectrally exact on the torus."""
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    axes = tuple(axes)
    lengths = (length,) * len(axes) if np.isscalar(length) else tuple(length)
    values = np.asarray(values)
    measure = float(np.prod(lengths))
    out = values.mean(axis=axes) * measure
    return out


def dealias(values: np.ndarray, axes: int | Iterable[int]) -> np.ndarray:
    """Zero Fourier modes above two thirds of the Nyquist index along ``axes``."""
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    values = np.asarray(values, dtype=float)
    coeffs = np.fft.fftn(values, axes=axes)
    for ax in axes:
        n = values.shape[ax]
        m = np.abs(np.fft.fftfreq(n, d=1.0 / n))
        keep = (m <= n // 3).astype(float)
        coeffs *= _axis_multiplier(keep, ax, values.ndim)
    return np.real(np.fft.ifftn(coeffs, axes=axes))
