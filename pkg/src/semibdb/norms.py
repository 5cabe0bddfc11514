"""Truncated analytic norms on the phase-space torus.

Every norm here is a finite weighted sum of *leaves* ``int |d_x^c d_p^e f| dp``
(reduced by a sup over x-nodes, or kept per node for the local seminorms).
Leaves come from one forward FFT (with round-off-level coefficients zeroed) and
are cached per derivative multi-index.
Summations run in ascending total order, lexicographic within an order.

Truncation: the series over ``(a, b)`` keeps ``|a| <= K`` and ``|b| <= K``; a
truncated norm is thus a polynomial in the radius whose coefficients are
exposed so identities in the radius (such as the time-shifted tracker) can be
evaluated exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial, prod
from typing import Literal, Sequence

import numpy as np

from semibdb.errors import ProfileInvalid
from semibdb.grid import PhaseGrid, wavenumbers

Variant = Literal["double_bar", "single_bar"]


def multi_indices(d: int, max_order: int) -> list[tuple[int, ...]]:
    """All ``a in N_0^d`` with ``|a| <= max_order``, ascending ``|a|`` then lexicographic."""
    out = [a for a in itertools.product(range(max_order + 1), repeat=d) if sum(a) <= max_order]
    return sorted(out, key=lambda a: (sum(a), a))


def _mfact(a: Sequence[int]) -> int:
    return prod(factorial(k) for k in a)


def _unit(d: int, i: int) -> tuple[int, ...]:
    return tuple(1 if k == i else 0 for k in range(d))


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _first_order_shifts(d: int):
    """Pairs ``(i, j)`` with ``|i + j| = 1``: x-derivatives first, then p."""
    z = (0,) * d
    return [(_unit(d, k), z) for k in range(d)] + [(z, _unit(d, k)) for k in range(d)]


# spectral coefficients below this fraction of the largest are round-off; high-order
# multipliers (ik)^a would otherwise amplify them past the true leaf values
NOISE_FLOOR = 64 * np.finfo(float).eps


def _denoised_fft(f: np.ndarray) -> np.ndarray:
    hat = np.fft.fftn(f)
    peak = np.max(np.abs(hat)) if hat.size else 0.0
    hat[np.abs(hat) < NOISE_FLOOR * peak] = 0.0
    return hat


def lift_x(n: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Space-only field viewed as constant in ``p``."""
    return np.broadcast_to(np.asarray(n)[(Ellipsis,) + (None,) * grid.d], grid.phase_shape)


def lift_p(v: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Momentum-only field viewed as constant in ``x``."""
    return np.broadcast_to(np.asarray(v)[(None,) * grid.d], grid.phase_shape)


class Leaves:
    """Cached derivative leaves of one phase-space field.

    ``local(cx, cp)`` is the per-x array ``int |d_x^cx d_p^cp f| dp``;
    ``sup(cx, cp)`` its maximum over x-nodes; ``linf(cx, cp)`` the max over all
    phase-space nodes.
    """

    def __init__(self, f: np.ndarray, grid: PhaseGrid):
        f = np.asarray(f)
        if f.shape != grid.phase_shape:
            raise ValueError(f"expected phase-space shape {grid.phase_shape}, got {f.shape}")
        self.grid = grid
        self.complex = np.iscomplexobj(f)
        self._hat = _denoised_fft(f)
        d = grid.d
        self._k = [wavenumbers(grid.Nx, grid.Lx)] * d + [wavenumbers(grid.Np, grid.Lp)] * d
        self._n = [grid.Nx] * d + [grid.Np] * d
        self._deriv: dict = {}
        self._local: dict = {}

    def derivative(self, cx: tuple[int, ...], cp: tuple[int, ...]) -> np.ndarray:
        key = (cx, cp)
        if key not in self._deriv:
            orders = tuple(cx) + tuple(cp)
            spec = self._hat
            if any(orders):
                spec = spec.copy()
                for ax, o in enumerate(orders):
                    if o == 0:
                        continue
                    mult = (1j * self._k[ax]) ** o
                    if o % 2 == 1 and self._n[ax] % 2 == 0:
                        mult = mult.copy()
                        mult[self._n[ax] // 2] = 0.0
                    shape = [1] * spec.ndim
                    shape[ax] = -1
                    spec = spec * mult.reshape(shape)
            out = np.fft.ifftn(spec)
            self._deriv[key] = out if self.complex else out.real
        return self._deriv[key]

    def local(self, cx, cp) -> np.ndarray:
        key = (tuple(cx), tuple(cp))
        if key not in self._local:
            self._local[key] = self.grid.integrate_p(np.abs(self.derivative(*key)))
        return self._local[key]

    def sup(self, cx, cp) -> float:
        return float(np.max(self.local(cx, cp)))

    def linf(self, cx, cp) -> float:
        return float(np.max(np.abs(self.derivative(tuple(cx), tuple(cp)))))


def _leaf(leaves: Leaves, a, b, variant: Variant, reduce):
    val = reduce(a, b)
    if variant == "double_bar":
        for i, j in _first_order_shifts(leaves.grid.d):
            val = val + reduce(_add(a, i), _add(b, j))
    return val


def norm_coefficients(
    f: np.ndarray | Leaves,
    grid: PhaseGrid,
    K: int,
    variant: Variant = "double_bar",
    x_index: tuple[int, ...] | None = None,
    shift: tuple[tuple[int, ...], tuple[int, ...]] | None = None,
) -> np.ndarray:
    """Coefficients ``c_k`` with truncated norm ``= sum_k c_k nu^k`` (``k <= 2K``).

    ``x_index`` selects the space-local seminorm at that node instead of the
    sup over x; ``shift`` evaluates the norm of ``d_x^i d_p^j f``.
    """
    leaves = f if isinstance(f, Leaves) else Leaves(f, grid)
    d = grid.d
    if x_index is None:
        reduce = leaves.sup
    else:
        def reduce(cx, cp):
            return float(leaves.local(cx, cp)[tuple(x_index)])
    if shift is not None:
        base = reduce
        si, sj = shift

        def reduce(cx, cp):  # noqa: F811
            return base(_add(cx, si), _add(cp, sj))
    coeffs = np.zeros(2 * K + 1)
    idx = multi_indices(d, K)
    for a in idx:
        for b in idx:
            coeffs[sum(a) + sum(b)] += _leaf(leaves, a, b, variant, reduce) / (_mfact(a) * _mfact(b))
    return coeffs


def evaluate_polynomial(coeffs: np.ndarray, nu: float) -> float:
    """``sum_k c_k nu^k`` accumulated in ascending order."""
    total, power = 0.0, 1.0
    for c in coeffs:
        total += c * power
        power *= nu
    return float(total)


def radius_derivative(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of ``d/dnu`` of the truncated norm polynomial."""
    return np.arange(1, len(coeffs)) * np.asarray(coeffs)[1:]


def phase_norm(f, grid: PhaseGrid, nu: float, K: int = 6, variant: Variant = "double_bar") -> float:
    """Truncated ``||f||_{C^nu}`` (``double_bar``: W^{1,inf}_x W^{1,1}_p leaves) or ``|f|_{C^nu}`` (``single_bar``).

    Spectral leaves are trustworthy for band-limited data only; ``K <= 8`` at
    256 points per axis keeps round-off well below the weights.
    """
    return evaluate_polynomial(norm_coefficients(f, grid, K, variant), nu)


def derivative_seminorm(f, grid: PhaseGrid, nu: float, K: int = 6, x_index=None) -> float:
    """``||Df||_{C^nu} = sum_{|i+j|=1} ||d_x^i d_p^j f||_{C^nu}`` at truncation ``K``."""
    leaves = f if isinstance(f, Leaves) else Leaves(f, grid)
    return float(
        sum(
            evaluate_polynomial(norm_coefficients(leaves, grid, K, "double_bar", x_index, shift=s), nu)
            for s in _first_order_shifts(grid.d)
        )
    )


def local_seminorm(
    f,
    grid: PhaseGrid,
    nu: float,
    K: int,
    x_index: tuple[int, ...],
    dotted: bool = False,
    variant: Variant = "double_bar",
) -> float:
    """Space-local ``||f||_{C^nu_x}`` at node ``x_index``; ``dotted`` drops the radius-zero part.

    With ``variant="single_bar"`` and ``dotted`` this is ``|f|_{dot C^nu_x}``, the
    sum over ``(a, b) != 0`` of single leaves.
    """
    c = norm_coefficients(f, grid, K, variant, x_index=tuple(x_index))
    if dotted:
        c = c.copy()
        c[0] = 0.0
    return evaluate_polynomial(c, nu)


def local_comparison_constant(d: int, K: int, mu1: float, mu2: float, samples: int = 201) -> float:
    """Smallest ``C`` with ``||f||_{dot C^nu_x} <= nu C |f|_{dot C^{mu2}_x}`` for all truncated ``f``, ``nu <= mu1``.

    The left side at truncation ``K`` uses leaves of orders up to ``K + 1`` per
    variable group; the right side must be truncated at ``K + 1``. Both sides are
    nonnegative combinations of the same leaves, so ``C`` is the largest ratio
    of leaf coefficients, maximised over a grid of ``nu`` in ``(0, mu1]``.
    """
    if not 0 < mu1 < mu2:
        raise ValueError("need 0 < mu1 < mu2")
    idx = multi_indices(d, K)
    shifts = [((0,) * d, (0,) * d)] + _first_order_shifts(d)
    best = 0.0
    for nu in np.linspace(mu1 / samples, mu1, samples):
        lhs: dict = {}
        for a in idx:
            for b in idx:
                if sum(a) + sum(b) == 0:
                    continue
                w = nu ** (sum(a) + sum(b)) / (_mfact(a) * _mfact(b))
                for i, j in shifts:
                    key = (_add(a, i), _add(b, j))
                    lhs[key] = lhs.get(key, 0.0) + w
        for (cx, cp), w in lhs.items():
            rhs = mu2 ** (sum(cx) + sum(cp)) / (_mfact(cx) * _mfact(cp))
            best = max(best, w / (nu * rhs))
    return best


def velocity_norm(u: np.ndarray, grid: PhaseGrid, nu: float, K: int = 6) -> float:
    """Truncated ``||u||_{C^{nu,inf}} = max_i sum_b nu^|b|/b! ||d^b u_i||_{W^{1,inf}}`` for ``u`` of shape ``(d,) + P``."""
    d = grid.d
    u = np.asarray(u)
    k = wavenumbers(grid.Np, grid.Lp)
    best = 0.0
    for comp in u:
        hat = _denoised_fft(comp)
        cache: dict = {}

        def sup(c):
            if c not in cache:
                spec = hat
                for ax, o in enumerate(c):
                    if o:
                        mult = (1j * k) ** o
                        if o % 2 == 1 and grid.Np % 2 == 0:
                            mult = mult.copy()
                            mult[grid.Np // 2] = 0.0
                        shape = [1] * d
                        shape[ax] = -1
                        spec = spec * mult.reshape(shape)
                cache[c] = float(np.max(np.abs(np.fft.ifftn(spec).real)))
            return cache[c]

        total = 0.0
        for b in multi_indices(d, K):
            leaf = sup(b) + sum(sup(_add(b, _unit(d, i))) for i in range(d))
            total += nu ** sum(b) / _mfact(b) * leaf
        best = max(best, total)
    return best


def lebesgue_l1(f: np.ndarray, grid: PhaseGrid) -> float:
    """``int int |f| dx dp`` over the box."""
    return float(grid.integrate(np.abs(f)))


def sobolev_w_inf(f: np.ndarray, grid: PhaseGrid, k: int = 1) -> float:
    """``sum_{|c| <= k} ||d^c f||_{L^inf}`` over all phase-space derivatives."""
    leaves = Leaves(f, grid)
    d = grid.d
    total = 0.0
    for c in multi_indices(2 * d, k):
        total += leaves.linf(c[:d], c[d:])
    return total


# time-shifted tracker ----------------------------------------------------------


@dataclass(frozen=True)
class NormProfile:
    """Radius ``nu``, decay rate ``mu``, truncation ``K`` and horizon ``T``."""

    nu: float
    mu: float
    K: int
    T: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ProfileInvalid("nu must be positive")
        if self.mu < 0:
            raise ProfileInvalid("mu must be >= 0")
        if self.K < 1:
            raise ProfileInvalid("K must be >= 1")
        if self.T < 0:
            raise ProfileInvalid("T must be >= 0")
        if self.mu * self.T >= self.nu:
            raise ProfileInvalid(f"mu*T = {self.mu * self.T:g} must stay below nu = {self.nu:g}")

    def radius(self, t):
        return self.nu - self.mu * np.asarray(t)


@dataclass
class NormSeries:
    times: np.ndarray
    norm: np.ndarray  # ||f(t)||_{C^{nu - mu t}}
    dnorm: np.ndarray  # ||Df(t)||_{C^{nu - mu t}}
    dt_norm: np.ndarray  # ||d_t f(t)||_{C^{nu - mu t}}
    lhs: float
    rhs: float
    verdict: str = field(default="")

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def _poly_time_integral(c0: np.ndarray, c1: np.ndarray, t0: float, t1: float, nu: float, mu: float) -> float:
    """``int_{t0}^{t1} sum_k c_k(s) (nu - mu s)^k ds`` for coefficients linear in ``s``.

    Exact for the interpolant, via Gauss-Legendre on the polynomial integrand.
    """
    h = t1 - t0
    if h == 0:
        return 0.0
    deg = len(c0) + 1
    x, w = np.polynomial.legendre.leggauss(deg // 2 + 2)
    s = t0 + 0.5 * h * (x + 1.0)
    theta = (s - t0) / h
    total = 0.0
    for sk, th, wk in zip(s, theta, w):
        total += wk * evaluate_polynomial((1 - th) * c0 + th * c1, nu - mu * sk)
    return 0.5 * h * total


def weighted_tracker(
    times: Sequence[float],
    fields: Sequence[np.ndarray],
    derivatives: Sequence[np.ndarray],
    grid: PhaseGrid,
    profile: NormProfile,
    tol: float = 1e-6,
) -> NormSeries:
    """Both sides of ``||f||_{nu,mu} <= ||f(0)||_{C^nu} + int ||d_t f||_{C^{nu - mu t}} dt``.

    Each snapshot's truncated norm is a polynomial ``P(lambda, t)`` in the
    radius; the dissipative term uses ``Df = d_lambda P`` (which is the
    truncation of ``||Df||_{C^lambda}``). Between snapshots the coefficients are
    interpolated linearly and the radius dependence integrated exactly, so the
    left side equals ``||f0||_{C^nu}`` identically for static data.
    """
    times = np.asarray(times, dtype=float)
    if len(times) != len(fields) or len(times) != len(derivatives):
        raise ValueError("times, fields and derivatives must have equal length")
    if times[-1] - times[0] > profile.T * (1 + 1e-12):
        raise ProfileInvalid("snapshots extend beyond the profile horizon T")
    if len(times) > 2:
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
            raise ProfileInvalid("snapshots must be equispaced")
    nu, mu, K = profile.nu, profile.mu, profile.K
    t0 = times[0]
    cf = [norm_coefficients(f, grid, K) for f in fields]
    cd = [radius_derivative(c) for c in cf]
    ct = [norm_coefficients(g, grid, K) for g in derivatives]
    rad = [nu - mu * (t - t0) for t in times]
    norm = np.array([evaluate_polynomial(c, r) for c, r in zip(cf, rad)])
    dnorm = np.array([evaluate_polynomial(c, r) for c, r in zip(cd, rad)])
    dtn = np.array([evaluate_polynomial(c, r) for c, r in zip(ct, rad)])
    lhs = norm[0]
    diss = 0.0
    forcing = 0.0
    for k in range(1, len(times)):
        a, b = times[k - 1] - t0, times[k] - t0
        diss += _poly_time_integral(cd[k - 1], cd[k], a, b, nu, mu)
        forcing += _poly_time_integral(ct[k - 1], ct[k], a, b, nu, mu)
        lhs = max(lhs, norm[k] + mu * diss)
    rhs = norm[0] + forcing
    series = NormSeries(times=times, norm=norm, dnorm=dnorm, dt_norm=dtn, lhs=float(lhs), rhs=float(rhs))
    series.verdict = "satisfied" if series.slack >= -tol else "violated"
    return series


# derivative envelope --------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeReport:
    orders: dict[int, bool]
    worst_ratio: dict[int, float]  # max over x of lhs / bound

    @property
    def passed(self) -> bool:
        return all(self.orders.values())


def envelope_check(
    n_derivatives: np.ndarray,
    E_derivatives: np.ndarray,
    C0: float,
    nu: float,
    eta: float,
    K: int,
) -> EnvelopeReport:
    """Check ``|n^{(a)}| + |E^{(a)}| <= C0 n(1 - eta n) a! nu^{-a}`` for ``a = 1..K``.

    ``n_derivatives[a]`` and ``E_derivatives[a]`` hold the order-``a`` derivative
    sampled at common points (row 0 is the profile itself).
    """
    nd = np.asarray(n_derivatives, dtype=float)
    Ed = np.asarray(E_derivatives, dtype=float)
    if nd.shape[0] < K + 1 or Ed.shape[0] < K + 1:
        raise ValueError("need derivatives up to order K")
    n = nd[0]
    weight = C0 * n * (1.0 - eta * n)
    orders, worst = {}, {}
    for a in range(1, K + 1):
        lhs = np.abs(nd[a]) + np.abs(Ed[a])
        bound = weight * factorial(a) * nu ** (-a)
        orders[a] = bool(np.all(lhs <= bound * (1 + 1e-12)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, lhs / bound, np.where(lhs > 0, np.inf, 0.0))
        worst[a] = float(np.max(ratio))
    return EnvelopeReport(orders=orders, worst_ratio=worst)


def lorentzian_derivatives(x: np.ndarray, c: float, K: int) -> np.ndarray:
    """Derivatives of order ``0..K`` of ``1/(c + x^2)``, from partial fractions in ``x +- i sqrt(c)``."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(c)
    out = np.empty((K + 1,) + x.shape)
    for a in range(K + 1):
        z = (-1) ** a * factorial(a) * ((x - 1j * r) ** (-a - 1) - (x + 1j * r) ** (-a - 1)) / (2j * r)
        out[a] = z.real
    return out
