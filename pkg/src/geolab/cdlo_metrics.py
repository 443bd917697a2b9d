"""Candelas--de la Ossa Ricci-flat metrics on the local models.

Conventions
-----------
A Hermitian form ``H`` (``g_{j kbar}``) acts on holomorphic tangent vectors; the
real Riemannian length element is ``ds^2 = 2 H(v, vbar)``.  With this
normalization the cone metric ``(1/2) i ddbar r^2`` gives the radial ray
``sigma -> sigma^(3/2) p`` constant speed ``r(p)``.

Both Kähler potentials are rescaled by ``1/3`` so that their leading term is
``r^2 / 2``:

* resolution, parameter ``a``:  ``(a^2/3) f(x / a^3) + (4 a^2/3) log(1 + |lam|^2)``
  with ``x = r^3`` and ``x f'^3 + 6 f'^2 = 1``;
* smoothing, parameter ``t``:  ``f_t(||z||^2) / 3`` with the integral profile
  ``f_t``.

Batch routines take the point index on axis 0 and return numpy arrays;
:class:`MetricTensor` wraps a single evaluation together with the real tangent
frame it is expressed in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .local_models import (
    AmbientPoint,
    Chart,
    ChartPoint,
    GeometryError,
    Cone,
    Resolution,
    Smoothing,
    blowdown,
    blowdown_jacobian,
    critical_radius,
    phi_t,
    phi_t_differential,
)

FS_COEFF = 4.0
POTENTIAL_SCALE = 1.0 / 3.0

# ==========================================================================
# resolution profile
# ==========================================================================


def solve_cubic(x, c: float = 6.0, tol: float = 1e-15, maxiter: int = 100):
    """Positive root ``p`` of ``x p^3 + c p^2 = 1`` and ``dp/dx``.

    Safeguarded Newton started at the upper end of the bracket
    ``(0, min(c^(-1/2), x^(-1/3))]``; the cubic is convex and increasing on
    ``p > 0`` so the iterates decrease monotonically to the root.  A bisection
    step replaces any Newton step that leaves the bracket.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    if c <= 0:
        raise ValueError("c must be positive")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    hi = np.full(x.shape, c**-0.5)
    with np.errstate(divide="ignore", over="ignore"):
        hi = np.minimum(hi, np.where(x > 0, np.cbrt(1.0 / np.where(x > 0, x, 1.0)), np.inf))
    lo = np.zeros_like(hi)
    p = hi.copy()
    for _ in range(maxiter):
        g = x * p**3 + c * p * p - 1.0
        dg = 3 * x * p * p + 2 * c * p
        lo = np.where(g < 0, p, lo)
        hi = np.where(g > 0, p, hi)
        step = g / dg
        new = p - step
        bad = (new <= lo) | (new >= hi) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo + hi), new)
        done = np.abs(new - p) <= tol * np.abs(new)
        p = new
        if np.all(done):
            break
    dp = -p**3 / (3 * x * p * p + 2 * c * p)
    if scalar:
        return float(p[0]), float(dp[0])
    return p, dp


def solve_resolution_profile(x):
    """``(p, p')`` with ``p = f'(x)`` solving ``x p^3 + 6 p^2 = 1``."""
    return solve_cubic(x, 6.0)


def resolution_potential(x):
    """Raw profile ``f(x)`` with ``f(0) = 0``.

    With ``q = x f'(x)`` (so ``q^3 + 6 q^2 = x^2``) the integral of ``q/x`` is
    elementary: ``f = (3/2) q - 3 log(1 + q/6)``.
    """
    p, _ = solve_resolution_profile(x)
    q = np.asarray(x) * p
    return 1.5 * q - 3.0 * np.log1p(q / 6.0)


@dataclass(frozen=True)
class ResolutionProfile:
    """Tabulated resolution profile on a log-spaced grid in ``x = r^3``."""

    x: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    f: np.ndarray
    scale: float = POTENTIAL_SCALE

    @classmethod
    def build(cls, x_max: float = 1e9, n: int = 200, x_min: float = 1e-6) -> "ResolutionProfile":
        x = np.concatenate([[0.0], np.logspace(np.log10(x_min), np.log10(x_max), n - 1)])
        p, dp = solve_resolution_profile(x)
        return cls(x, p, dp, resolution_potential(x))

    def residual(self) -> np.ndarray:
        return np.abs(self.x * self.p**3 + 6 * self.p**2 - 1.0)

    def q_residual(self) -> np.ndarray:
        q = self.x * self.p
        return np.abs(q**3 + 6 * q * q - self.x**2) / np.maximum(1.0, self.x**2)

    def fit_log_coefficient(self, r_min: float = 10.0) -> float:
        """Coefficient of ``log r`` in the normalized potential minus ``r^2/2``."""
        r = np.cbrt(self.x)
        sel = r >= r_min
        resid = self.scale * self.f[sel] - 0.5 * r[sel] ** 2
        A = np.stack([np.log(r[sel]), np.ones(sel.sum()), r[sel] ** -2], -1)
        coef, *_ = np.linalg.lstsq(A, resid, rcond=None)
        return float(coef[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "p", "dp"])
            for row in zip(self.x, self.p, self.dp):
                w.writerow([repr(float(v)) for v in row])


# ==========================================================================
# smoothing profile
# ==========================================================================

_H_SERIES = np.array([1, -1 / 10, 43 / 4200, -3 / 2800, 8621 / 77616000, -5164889 / 454053600000])
_K_SERIES = np.array([-1 / 5, 13 / 175, -3 / 175, 128 / 40425, -20212 / 39414375, 525307 / 6897515625])
_SERIES_CUT = 0.1
_C43 = (4.0 / 3.0) ** (1.0 / 3.0)


def sinh2y_minus_2y(y):
    """``sinh(2y) - 2y`` without cancellation for small ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.sinh(2 * y) - 2 * y
    small = y < 0.5
    if np.any(small):
        u = 2 * y[small]
        term = u**3 / 6.0
        acc = term.copy()
        for k in range(2, 14):
            term = term * u * u / ((2 * k) * (2 * k + 1))
            acc = acc + term
        out = np.where(small, 0.0, out)
        out[small] = acc
    return out


def _poly_y2(coef, y):
    y2 = y * y
    acc = np.zeros_like(y)
    for c in coef[::-1]:
        acc = acc * y2 + c
    return acc


def _h(y):
    """``(sinh 2y - 2y)^(1/3) / sinh y``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.cbrt(sinh2y_minus_2y(y)) / np.sinh(y)
    return np.where(y < _SERIES_CUT, _C43 * _poly_y2(_H_SERIES, y), direct)


def _k(y):
    """``h'(y) / sinh y``."""
    y = np.asarray(y, dtype=float)
    S = sinh2y_minus_2y(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (4.0 / 3.0) * S ** (-2.0 / 3.0) - np.cbrt(S) * np.cosh(y) / np.sinh(y) ** 3
    return np.where(y < _SERIES_CUT, _C43 * _poly_y2(_K_SERIES, y), direct)


def _smoothing_y(t, s):
    at = abs(t)
    s = np.asarray(s, dtype=float)
    if np.any(s < at * (1 - 1e-13)):
        raise GeometryError("s = ||z||^2 must be at least |t|")
    return np.arccosh(np.maximum(s / at, 1.0)), at


def smoothing_profile_d1(t, s):
    y, at = _smoothing_y(t, s)
    return (at * at / 2.0) ** (1.0 / 3.0) / at * _h(y)


def smoothing_profile_d2(t, s):
    y, at = _smoothing_y(t, s)
    return (at * at / 2.0) ** (1.0 / 3.0) / (at * at) * _k(y)


def smoothing_profile_value(t, s, epsrel: float = 1e-13):
    """``f_t(s)`` by adaptive quadrature over ``y in [0, arccosh(s/|t|)]``."""
    y, at = _smoothing_y(t, s)
    pref = (at * at / 2.0) ** (1.0 / 3.0)
    flat = np.atleast_1d(y).ravel()
    vals = np.empty_like(flat)
    for i, Y in enumerate(flat):
        if Y == 0:
            vals[i] = 0.0
            continue
        v, _ = integrate.quad(
            lambda u: np.cbrt(sinh2y_minus_2y(u)), 0.0, Y, epsabs=0.0, epsrel=epsrel, limit=200
        )
        vals[i] = v
    out = pref * vals.reshape(np.shape(y))
    return float(out) if np.ndim(out) == 0 else out


def eval_smoothing_profile(t, s):
    """``(f_t, f_t', f_t'')`` at ``s = ||z||^2 >= |t|`` (raw, un-normalized profile)."""
    if t == 0:
        raise ValueError("t must be nonzero")
    return smoothing_profile_value(t, s), smoothing_profile_d1(t, s), smoothing_profile_d2(t, s)


@dataclass(frozen=True)
class SmoothingProfile:
    t: float
    s: np.ndarray
    f: np.ndarray
    df: np.ndarray
    d2f: np.ndarray

    @classmethod
    def build(cls, t: complex, s_max_ratio: float = 1e4, n: int = 100) -> "SmoothingProfile":
        at = abs(t)
        s = at * np.concatenate([[1.0], 1.0 + np.logspace(-8, np.log10(s_max_ratio), n - 1)])
        f, df, d2f = eval_smoothing_profile(t, s)
        return cls(at, s, f, df, d2f)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "f_t", "df_t", "d2f_t"])
            for row in zip(self.s, self.f, self.df, self.d2f):
                w.writerow([repr(float(v)) for v in row])


# ==========================================================================
# Hermitian forms (batch)
# ==========================================================================


def resolution_hermitian(coords: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Chart components ``g_{j kbar}`` of the resolution metric, shape ``(n, 3, 3)``.

    Valid in either chart: ``x = (1+|lam|^2)(|u|^2+|v|^2)`` and the Fubini--Study
    term have the same form in ``U`` and ``U'``.
    """
    coords = np.asarray(coords, dtype=complex)
    lam, u, v = coords[..., 0], coords[..., 1], coords[..., 2]
    A = 1.0 + abs(lam) ** 2
    B = abs(u) ** 2 + abs(v) ** 2
    x = A * B
    P, dP = solve_cubic(x, 6.0 * a * a)
    d1 = POTENTIAL_SCALE * np.atleast_1d(P)
    d2 = POTENTIAL_SCALE * np.atleast_1d(dP)
    d1 = d1.reshape(x.shape)
    d2 = d2.reshape(x.shape)
    dx = np.stack([np.conj(lam) * B, A * np.conj(u), A * np.conj(v)], -1)
    zero = np.zeros_like(lam)
    X1 = np.stack(
        [
            np.stack([B.astype(complex), np.conj(lam) * u, np.conj(lam) * v], -1),
            np.stack([lam * np.conj(u), A.astype(complex), zero], -1),
            np.stack([lam * np.conj(v), zero, A.astype(complex)], -1),
        ],
        -2,
    )
    H = d1[..., None, None] * X1 + d2[..., None, None] * dx[..., :, None] * np.conj(dx[..., None, :])
    H[..., 0, 0] += POTENTIAL_SCALE * FS_COEFF * a * a / A**2
    return H


def resolution_potential_chart(coords: np.ndarray, a: float = 1.0) -> np.ndarray:
    """The normalized resolution Kähler potential in chart ``U``."""
    coords = np.asarray(coords, dtype=complex)
    A = 1.0 + abs(coords[..., 0]) ** 2
    x = A * (abs(coords[..., 1]) ** 2 + abs(coords[..., 2]) ** 2)
    return POTENTIAL_SCALE * (a * a * resolution_potential(x / a**3) + FS_COEFF * a * a * np.log(A))


def _radial_hermitian(z: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    eye = np.eye(z.shape[-1])
    return d1[..., None, None] * eye + d2[..., None, None] * np.conj(z)[..., :, None] * z[..., None, :]


def cone_derivatives(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return s ** (-1.0 / 3.0) / 3.0, -(s ** (-4.0 / 3.0)) / 9.0


def smoothing_derivatives(t, s):
    return (
        POTENTIAL_SCALE * smoothing_profile_d1(t, s),
        POTENTIAL_SCALE * smoothing_profile_d2(t, s),
    )


def cone_hermitian(z: np.ndarray) -> np.ndarray:
    """Ambient form ``phi' delta + phi'' zbar z^T`` of ``(1/2) i ddbar ||z||^(4/3)``."""
    z = np.asarray(z, dtype=complex)
    s = np.sum(abs(z) ** 2, axis=-1)
    if np.any(s == 0):
        raise GeometryError("the cone metric is undefined at the vertex")
    return _radial_hermitian(z, *cone_derivatives(s))


def smoothing_hermitian(z: np.ndarray, t: complex) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    s = np.sum(abs(z) ** 2, axis=-1)
    return _radial_hermitian(z, *smoothing_derivatives(t, s))


def tangent_basis(z: np.ndarray) -> np.ndarray:
    """Unitary basis of ``{v : sum z_j v_j = 0}`` as rows, shape ``(..., 3, 4)``."""
    z = np.asarray(z, dtype=complex)
    _, _, vh = np.linalg.svd(z[..., None, :])
    return np.conj(vh[..., 1:, :])


def real_gram(W: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``G_ij = 2 Re(w_i^T H conj(w_j))`` for frame rows ``W``."""
    return 2.0 * np.real(np.einsum("...ia,...ab,...jb->...ij", W, H, np.conj(W)))


def complex_frame(basis: np.ndarray) -> np.ndarray:
    return np.concatenate([basis, 1j * basis], axis=-2)


# ==========================================================================
# MetricTensor
# ==========================================================================


@dataclass(frozen=True)
class MetricTensor:
    """A Riemannian metric at one point in a real tangent frame.

    ``frame`` holds ``m`` real tangent vectors written as complex ambient (or chart)
    vectors; ``gram[i, j]`` is the metric on frame vectors ``i, j``.  ``ambient``
    keeps the Hermitian form the gram matrix came from, when there is one.
    """

    point: np.ndarray
    frame: np.ndarray
    gram: np.ndarray
    ambient: np.ndarray | None = None

    @classmethod
    def from_hermitian(cls, point, H, basis=None) -> "MetricTensor":
        H = np.asarray(H, dtype=complex)
        if basis is None:
            basis = np.eye(H.shape[-1], dtype=complex)
        frame = complex_frame(np.asarray(basis, dtype=complex))
        return cls(np.asarray(point), frame, real_gram(frame, H), H)

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    def hermitian(self) -> np.ndarray:
        """``g_{j kbar}`` in the complex basis underlying a ``(e, i e)`` frame."""
        k = self.dim // 2
        if not np.allclose(self.frame[k:], 1j * self.frame[:k]):
            raise ValueError("frame is not of the form (e, i e)")
        G = self.gram
        return 0.5 * (G[:k, :k] + 1j * G[:k, k:])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.gram)[0])

    def is_positive(self) -> bool:
        return self.min_eigenvalue() > 0

    def __call__(self, v, w=None):
        """Evaluate on real-coordinate vectors (coefficients on the frame)."""
        w = v if w is None else w
        return float(np.asarray(v) @ self.gram @ np.asarray(w))

    def scaled(self, c: float) -> "MetricTensor":
        return MetricTensor(self.point, self.frame, c * self.gram,
                            None if self.ambient is None else c * self.ambient)

    def in_frame(self, M: np.ndarray) -> "MetricTensor":
        """Re-express in the frame ``M @ frame`` (``M`` real, invertible)."""
        M = np.asarray(M, dtype=float)
        return MetricTensor(self.point, M @ self.frame, M @ self.gram @ M.T, self.ambient)


def tensor_diff_norm(g: MetricTensor, h: MetricTensor) -> float:
    """``|g - h|_h``, normalized so that the complex formula is reproduced.

    For J-invariant tensors this equals
    ``sqrt(h^{j kbar} h^{l mbar} (g-h)_{j mbar} (g-h)_{l kbar})``; for general real
    tensors it is ``sqrt(tr((h^-1 (g-h))^2) / 2)``.
    """
    if g.frame.shape != h.frame.shape or not np.allclose(g.frame, h.frame, atol=1e-12):
        raise ValueError("tensors are expressed in different frames")
    if np.linalg.eigvalsh(h.gram)[0] <= 0:
        raise ValueError("reference tensor is not positive definite")
    return float(diff_norm_batch(g.gram, h.gram))


def diff_norm_batch(G: np.ndarray, H: np.ndarray) -> np.ndarray:
    M = np.linalg.solve(H, G - H)
    return np.sqrt(0.5 * np.einsum("...ij,...ji->...", M, M))


def hermitian_diff_norm(G: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Complex version of :func:`diff_norm_batch` for Hermitian matrices."""
    M = np.linalg.solve(H, G - H)
    return np.sqrt(np.real(np.einsum("...ij,...ji->...", M, M)))


def volume_density(g: MetricTensor) -> float:
    """Riemannian volume density ``sqrt(det gram)``; equals ``8 det g_{j kbar}`` in a unitary frame."""
    d = np.linalg.det(g.gram)
    if not d > 0:
        raise ValueError("metric is not positive definite")
    return float(np.sqrt(d))


# ==========================================================================
# pointwise metric evaluators
# ==========================================================================


def metric_resolution(a: float, p: ChartPoint) -> MetricTensor:
    if not a > 0:
        raise ValueError("a must be positive")
    H = resolution_hermitian(p.coords[None, :], a)[0]
    return MetricTensor.from_hermitian(p.coords, H)


def metric_cone(z) -> MetricTensor:
    z = z.z if isinstance(z, AmbientPoint) else np.asarray(z, dtype=complex)
    if isinstance(z, np.ndarray) and np.sum(abs(z) ** 2) == 0:
        raise GeometryError("the cone metric is undefined at the vertex")
    H = cone_hermitian(z[None, :])[0]
    return MetricTensor.from_hermitian(z, H, tangent_basis(z[None, :])[0])


def metric_smoothing(t, z) -> MetricTensor:
    z = z.z if isinstance(z, AmbientPoint) else np.asarray(z, dtype=complex)
    H = smoothing_hermitian(z[None, :], t)[0]
    return MetricTensor.from_hermitian(z, H, tangent_basis(z[None, :])[0])


# maps -------------------------------------------------------------------


@dataclass(frozen=True)
class Blowdown:
    """The blowdown, from chart points to V_0."""

    chart: Chart = Chart.U

    def apply(self, p):
        return blowdown(p, self.chart)

    def differential(self, p, vectors):
        J = blowdown_jacobian(p, self.chart)
        return np.einsum("ab,...b->...a", J, vectors)

    def check(self, p):
        pass


@dataclass(frozen=True)
class PhiT:
    t: complex

    def apply(self, p):
        return phi_t(p, self.t)

    def differential(self, p, vectors):
        return phi_t_differential(np.broadcast_to(p, np.shape(vectors)), vectors, self.t)

    def check(self, p):
        r = float(np.cbrt(np.sum(abs(np.asarray(p)) ** 2)))
        if not r > critical_radius(self.t):
            raise GeometryError("phi_t is a diffeomorphism only for r > (|t|/2)^(1/3)")


@dataclass(frozen=True)
class Scale:
    """``S_R`` optionally composed with multiplication by ``e^{i phase}`` on C^4.

    On chart points the fibre coordinates are scaled; the phase is ignored.
    """

    R: float
    phase: float = 0.0
    on_chart: bool = False

    def factor(self):
        return self.R**1.5 * np.exp(1j * self.phase)

    def apply(self, p):
        p = np.asarray(p, dtype=complex)
        if self.on_chart:
            out = p.copy()
            out[..., 1:] *= self.R**1.5
            return out
        return self.factor() * p

    def differential(self, p, vectors):
        vectors = np.asarray(vectors, dtype=complex)
        if self.on_chart:
            out = vectors.copy()
            out[..., 1:] *= self.R**1.5
            return out
        return self.factor() * vectors

    def check(self, p):
        if not self.R > 0:
            raise GeometryError("scale factor must be positive")


def pullback(fmap, g: Callable[[np.ndarray], np.ndarray], p, frame=None, strict: bool = True) -> MetricTensor:
    """``(F^* g)(p)`` with ``g`` returning the target's Hermitian form at ``F(p)``.

    ``frame`` defaults to the standard chart frame for 3-vectors and to the
    tangent frame of V_t for 4-vectors.
    """
    p = np.asarray(p, dtype=complex)
    if strict:
        fmap.check(p)
    if frame is None:
        if p.shape[-1] == 3:
            frame = complex_frame(np.eye(3, dtype=complex))
        else:
            frame = complex_frame(tangent_basis(p[None, :])[0])
    W = fmap.differential(p, frame)
    H = g(fmap.apply(p))
    return MetricTensor(p, frame, real_gram(W, H))


def cone_form(z):
    return cone_hermitian(np.asarray(z)[None, :])[0]


def smoothing_form(t):
    return lambda z: smoothing_hermitian(np.asarray(z)[None, :], t)[0]


def resolution_form(a):
    return lambda c: resolution_hermitian(np.asarray(c)[None, :], a)[0]


def metric_resolution_by_scaling(a: float, p: ChartPoint) -> MetricTensor:
    """``a^2 S_{1/a}^* g_1`` evaluated through the scaling differential."""
    pb = pullback(Scale(1.0 / a, on_chart=True), resolution_form(1.0), p.coords)
    return pb.scaled(a * a)


def metric_smoothing_by_scaling(t: complex, z) -> MetricTensor:
    """``|t|^(2/3) S_{t^(-1/3)}^* g_1`` with the phase rotation taking V_t to V_1."""
    z = z.z if isinstance(z, AmbientPoint) else np.asarray(z, dtype=complex)
    m = Scale(abs(t) ** (-1.0 / 3.0), phase=-0.5 * np.angle(t))
    pb = pullback(m, smoothing_form(1.0), z)
    return pb.scaled(abs(t) ** (2.0 / 3.0))


# ==========================================================================
# decay diagnostics (batch)
# ==========================================================================


def resolution_cone_difference(coords, chart, a: float = 1.0) -> np.ndarray:
    """``|(pi^-1)^* g_a - g_0|_{g_0}`` at chart points off the zero section."""
    coords = np.asarray(coords, dtype=complex)
    J = blowdown_jacobian(coords, chart)
    z = blowdown(coords, chart)
    H0 = np.einsum("...ja,...jk,...kb->...ab", J, cone_hermitian(z), np.conj(J))
    H1 = resolution_hermitian(coords, a)
    return hermitian_diff_norm(H1, H0)


def smoothing_cone_difference(z, t) -> np.ndarray:
    """``|phi_t^* g_t - g_0|_{g_0}`` at cone points with ``r > (|t|/2)^(1/3)``."""
    z = np.asarray(z, dtype=complex)
    E = complex_frame(tangent_basis(z))
    G0 = real_gram(E, cone_hermitian(z))
    W = phi_t_differential(np.broadcast_to(z[..., None, :], E.shape), E, t)
    Gt = real_gram(W, smoothing_hermitian(phi_t(z, t), t))
    return diff_norm_batch(Gt, G0)


# ==========================================================================
# metric models for curves
# ==========================================================================


class MetricModel:
    """Speed evaluation for curves parametrized in resolution chart coordinates."""

    model = None

    def speed_sq(self, coords, chart, vel) -> np.ndarray:
        raise NotImplementedError

    def chart_gram(self, coords, chart) -> np.ndarray:
        """Real 6x6 pullback metric in chart coordinates ``(Re, Im)``."""
        frame = complex_frame(np.eye(3, dtype=complex))
        coords = np.asarray(coords, dtype=complex)
        n = coords.shape[0]
        G = np.empty((n, 6, 6))
        for i in range(6):
            for j in range(i, 6):
                vi = np.broadcast_to(frame[i], coords.shape)
                vj = np.broadcast_to(frame[j], coords.shape)
                qs = self.speed_sq(coords, chart, vi + vj)
                qd = self.speed_sq(coords, chart, vi - vj)
                G[:, i, j] = G[:, j, i] = 0.25 * (qs - qd)
        return G

    def volume_density_chart(self, coords, chart) -> np.ndarray:
        return np.sqrt(np.maximum(np.linalg.det(self.chart_gram(coords, chart)), 0.0))


class ResolutionMetric(MetricModel):
    def __init__(self, a: float = 1.0):
        if not a > 0:
            raise ValueError("a must be positive")
        self.a = float(a)
        self.model = Resolution(self.a)

    def hermitian(self, coords, chart=None):
        return resolution_hermitian(coords, self.a)

    def speed_sq(self, coords, chart, vel):
        H = resolution_hermitian(coords, self.a)
        return 2.0 * np.real(np.einsum("...a,...ab,...b->...", vel, H, np.conj(vel)))

    def volume_density_chart(self, coords, chart):
        return 8.0 * np.abs(np.linalg.det(resolution_hermitian(coords, self.a)))

    def chart_gram(self, coords, chart):
        return real_gram(complex_frame(np.eye(3, dtype=complex)), resolution_hermitian(coords, self.a))


def _radial_speed_sq(z, w, d1, d2):
    ip = np.sum(w * np.conj(z), axis=-1)
    return 2.0 * (d1 * np.sum(abs(w) ** 2, axis=-1) + d2 * abs(ip) ** 2)


class ConeMetric(MetricModel):
    def __init__(self):
        self.model = Cone()

    def ambient_speed_sq(self, z, w):
        s = np.sum(abs(z) ** 2, axis=-1)
        return _radial_speed_sq(z, w, *cone_derivatives(s))

    def speed_sq(self, coords, chart, vel):
        z = blowdown(coords, chart)
        w = np.einsum("...ab,...b->...a", blowdown_jacobian(coords, chart), vel)
        return self.ambient_speed_sq(z, w)

    def hermitian(self, coords, chart):
        J = blowdown_jacobian(coords, chart)
        H = cone_hermitian(blowdown(coords, chart))
        return np.einsum("...ja,...jk,...kb->...ab", J, H, np.conj(J))

    def volume_density_chart(self, coords, chart):
        return 8.0 * np.abs(np.linalg.det(self.hermitian(coords, chart)))

    def chart_gram(self, coords, chart):
        return real_gram(complex_frame(np.eye(3, dtype=complex)), self.hermitian(coords, chart))


class SmoothingMetric(MetricModel):
    def __init__(self, t: complex):
        if t == 0:
            raise ValueError("t must be nonzero")
        self.t = complex(t)
        self.model = Smoothing(self.t)

    def ambient_speed_sq(self, z, w):
        s = np.sum(abs(z) ** 2, axis=-1)
        return _radial_speed_sq(z, w, *smoothing_derivatives(self.t, s))

    def speed_sq(self, coords, chart, vel):
        z0 = blowdown(coords, chart)
        w0 = np.einsum("...ab,...b->...a", blowdown_jacobian(coords, chart), vel)
        return self.ambient_speed_sq(phi_t(z0, self.t), phi_t_differential(z0, w0, self.t))


class FlatMetric(MetricModel):
    """Euclidean metric on chart coordinates (``|v|^2`` on real components)."""

    def speed_sq(self, coords, chart, vel):
        return np.sum(abs(np.asarray(vel)) ** 2, axis=-1)

    def ambient_speed_sq(self, z, w):
        return np.sum(abs(np.asarray(w)) ** 2, axis=-1)

    def volume_density_chart(self, coords, chart):
        return np.ones(np.shape(coords)[0])


class ScaledMetric(MetricModel):
    """``c * g`` for a base metric model ``g``."""

    def __init__(self, base: MetricModel, factor: float):
        self.base = base
        self.factor = float(factor)
        self.model = base.model

    def speed_sq(self, coords, chart, vel):
        return self.factor * self.base.speed_sq(coords, chart, vel)

    def ambient_speed_sq(self, z, w):
        return self.factor * self.base.ambient_speed_sq(z, w)

    def chart_gram(self, coords, chart):
        return self.factor * self.base.chart_gram(coords, chart)


def metric_model(model) -> MetricModel:
    if isinstance(model, Resolution):
        return ResolutionMetric(model.a)
    if isinstance(model, Cone):
        return ConeMetric()
    if isinstance(model, Smoothing):
        return SmoothingMetric(model.t)
    raise TypeError(f"no metric for {model!r}")


# ==========================================================================
# curves
# ==========================================================================


class QuadratureError(RuntimeError):
    pass


@dataclass
class Curve:
    """A parametrized curve with position and velocity evaluators.

    ``space`` is ``"chart"`` (positions are resolution chart coordinates in the
    fixed ``chart``) or ``"ambient"`` (positions in C^4 on V_0 or V_t).
    """

    position: Callable[[np.ndarray], np.ndarray]
    velocity: Callable[[np.ndarray], np.ndarray]
    interval: tuple[float, float] = (0.0, 1.0)
    space: str = "chart"
    chart: int = Chart.U

    def __post_init__(self):
        if not self.interval[1] >= self.interval[0]:
            raise ValueError("curve parameter must be increasing")


def segment(c0, c1, chart=Chart.U) -> Curve:
    """Straight segment in chart coordinates."""
    c0 = np.asarray(c0, dtype=complex)
    d = np.asarray(c1, dtype=complex) - c0
    return Curve(lambda s: c0 + np.multiply.outer(s, d), lambda s: np.broadcast_to(d, np.shape(s) + d.shape),
                 (0.0, 1.0), "chart", chart)


def polyline(points, chart=Chart.U) -> list[Curve]:
    pts = np.asarray(points, dtype=complex)
    return [segment(pts[i], pts[i + 1], chart) for i in range(len(pts) - 1)]


def radial_curve(p, s0: float, s1: float = 1.0, space: str = "ambient", chart=Chart.U) -> Curve:
    """``sigma -> sigma^(3/2) p`` (scaling only the fibre coordinates in a chart)."""
    p = np.asarray(p, dtype=complex)
    if space == "ambient":
        pos = lambda s: np.multiply.outer(np.asarray(s) ** 1.5, p)
        vel = lambda s: np.multiply.outer(1.5 * np.asarray(s) ** 0.5, p)
    else:
        def pos(s):
            s = np.asarray(s)
            out = np.broadcast_to(p, s.shape + (3,)).copy()
            out[..., 1:] *= (s**1.5)[..., None]
            return out

        def vel(s):
            s = np.asarray(s)
            out = np.zeros(s.shape + (3,), dtype=complex)
            out[..., 1:] = np.multiply.outer(1.5 * s**0.5, p[1:])
            return out
    return Curve(pos, vel, (s0, s1), space, chart)


def curve_speed(curve: Curve, metric: MetricModel, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    x, v = curve.position(s), curve.velocity(s)
    if curve.space == "chart":
        q = metric.speed_sq(x, np.full(s.shape, curve.chart, dtype=np.int8), v)
    else:
        q = metric.ambient_speed_sq(x, v)
    return np.sqrt(np.maximum(q, 0.0))


def _endpoint_speeds(curve, metric, s):
    # a singular endpoint (the cone vertex) is sampled just inside the interval
    with np.errstate(divide="ignore", invalid="ignore"):
        y = curve_speed(curve, metric, s)
    a, b = curve.interval
    for i in (0, -1):
        if not np.isfinite(y[i]):
            nudge = 1e-9 * (b - a) * (1 if i == 0 else -1)
            y[i] = curve_speed(curve, metric, np.array([s[i] + nudge]))[0]
    return y


def _simpson(y, h):
    return h / 3.0 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def curve_length(curve: Curve, metric: MetricModel, rtol: float = 1e-10,
                 panels: int = 8, max_panels: int = 2**16) -> float:
    """Length by composite Simpson quadrature, doubling the panel count until converged."""
    a, b = curve.interval
    if b == a:
        return 0.0
    m = panels
    s = np.linspace(a, b, 2 * m + 1)
    y = _endpoint_speeds(curve, metric, s)
    if not np.all(np.isfinite(y)):
        raise GeometryError("curve leaves the domain of the metric")
    prev = _simpson(y, (b - a) / (2 * m))
    while m < max_panels:
        m *= 2
        s_new = np.linspace(a, b, 2 * m + 1)[1::2]
        y_new = curve_speed(curve, metric, s_new)
        if not np.all(np.isfinite(y_new)):
            raise GeometryError("curve leaves the domain of the metric")
        merged = np.empty(2 * m + 1)
        merged[0::2] = y
        merged[1::2] = y_new
        y = merged
        cur = _simpson(y, (b - a) / (2 * m))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return float(cur)
        prev = cur
    raise QuadratureError("curve length quadrature did not converge")


def _x_and_dx(c, d):
    A = 1.0 + abs(c[..., 0]) ** 2
    B = abs(c[..., 1]) ** 2 + abs(c[..., 2]) ** 2
    dA = 2.0 * np.real(np.conj(c[..., 0]) * d[..., 0])
    dB = 2.0 * np.real(np.conj(c[..., 1]) * d[..., 1] + np.conj(c[..., 2]) * d[..., 2])
    return A * B, dA * B + A * dB


def edge_path(c0, c1, s, radial: bool = True):
    """Point and velocity at parameter ``s`` of the edge curve from ``c0`` to ``c1``.

    The curve is the chart segment with its fibre rescaled so that the radius
    interpolates linearly between the endpoint radii.  This keeps the curve at
    radii between those of its endpoints, away from the zero section and the
    vertex.  Edges with an endpoint at ``r = 0`` (or ``radial=False``) use the
    plain segment.
    """
    c0 = np.asarray(c0, dtype=complex)
    d = np.asarray(c1, dtype=complex) - c0
    c = c0 + s * d
    if not radial:
        return c, d
    x0, _ = _x_and_dx(c0, d)
    x1, _ = _x_and_dx(c0 + d, d)
    use = (x0 > 0) & (x1 > 0)
    r0, r1 = np.cbrt(x0), np.cbrt(x1)
    x, dx = _x_and_dx(c, d)
    with np.errstate(all="ignore"):
        r = np.cbrt(x)
        dr = r * dx / (3.0 * x)
        rl = r0 + s * (r1 - r0)
        k = rl / r
        dk = ((r1 - r0) * r - rl * dr) / (r * r)
        pos = c.copy()
        vel = d.copy()
        f = k**1.5
        pos[..., 1:] = f[..., None] * c[..., 1:]
        vel[..., 1:] = (1.5 * k**0.5 * dk)[..., None] * c[..., 1:] + f[..., None] * d[..., 1:]
    pos = np.where(use[..., None], pos, c)
    vel = np.where(use[..., None], vel, d)
    return pos, vel


def segment_lengths(metric: MetricModel, c0, c1, chart, rtol: float = 1e-4,
                    radial: bool = True, max_level: int = 12) -> np.ndarray:
    """Lengths of many edge curves (:func:`edge_path`) by composite Simpson.

    Starts from 5 points and doubles the panel count only for edges whose last
    two estimates differ by more than ``rtol`` (relative), up to ``2^max_level + 1``
    points.  Edges that still disagree keep their finest estimate.
    """
    c0 = np.asarray(c0, dtype=complex)
    c1 = np.asarray(c1, dtype=complex)
    chart = np.asarray(chart, dtype=np.int8)

    def speeds(idx, nodes):
        out = np.empty((nodes.size, idx.size))
        for k, s in enumerate(nodes):
            pos, vel = edge_path(c0[idx], c1[idx], s, radial)
            q = metric.speed_sq(pos, chart[idx], vel)
            out[k] = np.sqrt(np.maximum(q, 0.0))
        return out

    def simpson(y):
        m = y.shape[0] - 1
        return (y[0] + y[-1] + 4 * y[1:-1:2].sum(0) + 2 * y[2:-1:2].sum(0)) / (3.0 * m)

    idx = np.arange(c0.shape[0])
    y = speeds(idx, np.linspace(0, 1, 5))
    L = simpson(y)
    out = L.copy()
    for level in range(3, max_level + 1):
        m = 2**level
        y_new = np.empty((m + 1, idx.size))
        y_new[0::2] = y
        y_new[1::2] = speeds(idx, np.linspace(0, 1, m + 1)[1::2])
        L_new = simpson(y_new)
        out[idx] = L_new
        open_ = ~(np.abs(L_new - L) <= rtol * np.abs(L_new))
        if not open_.any():
            break
        idx, y, L = idx[open_], y_new[:, open_], L_new[open_]
    return out
