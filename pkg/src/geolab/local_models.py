"""Coordinate geometry of the conifold local models.

Three spaces are modelled:

* the small resolution ``O(-1) + O(-1) -> P^1`` in the charts ``U = (lam, u, v)``
  and ``U' = (lam', u', v')`` with ``lam' = 1/lam, u' = lam u, v' = lam v``;
* the cone ``V_0 = {sum z_i^2 = 0}`` in C^4;
* the smoothings ``V_t = {sum z_i^2 = t}``.

All batch functions take arrays with the point index on axis 0.  Chart coordinates
are ``(n, 3)`` complex arrays ordered ``(lam, u, v)`` together with an ``(n,)`` chart
id array (``0`` for ``U``, ``1`` for ``U'``).  Ambient points are ``(n, 4)`` complex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

SQRT2 = np.sqrt(2.0)
CONSTRAINT_RTOL = 1e-10


class Chart(IntEnum):
    U = 0
    Uprime = 1


class GeometryError(ValueError):
    """A point or parameter lies outside the domain of a model map."""


# --------------------------------------------------------------------------
# point types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartPoint:
    """A point of the small resolution in one of its two charts."""

    chart: Chart
    lam: complex
    u: complex
    v: complex

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.lam, self.u, self.v], dtype=complex)

    def to_chart(self, target: Chart) -> "ChartPoint":
        if Chart(target) == self.chart:
            return self
        c = transition(self.coords[None, :], np.array([self.chart]))[0]
        return ChartPoint(Chart(target), *c)


@dataclass(frozen=True)
class AmbientPoint:
    """A point ``z`` of C^4 lying on the fibre ``V_t``."""

    z: np.ndarray
    t: complex = 0.0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex).reshape(4)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", complex(self.t))

    def residual(self) -> float:
        return float(abs(np.sum(self.z**2) - self.t))

    def check(self, rtol: float = CONSTRAINT_RTOL) -> None:
        scale = max(1.0, float(np.vdot(self.z, self.z).real))
        if self.residual() > rtol * scale:
            raise GeometryError(
                f"point violates sum z^2 = t: residual {self.residual():.3e}"
            )


class RegionKind(IntEnum):
    Tube = 0
    Disc = 1
    Annulus = 2


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not 0.0 <= self.inner_radius <= self.outer_radius:
            raise ValueError("need 0 <= inner_radius <= outer_radius")
        if self.outer_radius <= 0.0:
            raise ValueError("outer_radius must be positive")

    @classmethod
    def tube(cls, outer: float, inner: float = 0.0) -> "Region":
        return cls(RegionKind.Tube, inner, outer)

    @classmethod
    def disc(cls, outer: float, inner: float = 0.0) -> "Region":
        return cls(RegionKind.Disc, inner, outer)

    @classmethod
    def annulus(cls, inner: float, outer: float) -> "Region":
        return cls(RegionKind.Annulus, inner, outer)


# model tags ---------------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("resolution parameter a must be positive")

    @property
    def name(self) -> str:
        return "resolution"

    @property
    def param(self) -> float:
        return self.a


@dataclass(frozen=True)
class Cone:
    @property
    def name(self) -> str:
        return "cone"

    @property
    def param(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Smoothing:
    t: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "t", complex(self.t))
        if self.t == 0:
            raise ValueError("smoothing parameter t must be nonzero")

    @property
    def name(self) -> str:
        return "smoothing"

    @property
    def param(self) -> complex:
        return self.t


Model = Resolution | Cone | Smoothing


# --------------------------------------------------------------------------
# radius and scaling
# --------------------------------------------------------------------------


def chart_radius(coords: np.ndarray) -> np.ndarray:
    """``r = (1+|lam|^2)^(1/3) (|u|^2+|v|^2)^(1/3)``; identical formula in both charts."""
    coords = np.asarray(coords)
    lam, u, v = coords[..., 0], coords[..., 1], coords[..., 2]
    return np.cbrt((1.0 + abs(lam) ** 2) * (abs(u) ** 2 + abs(v) ** 2))


def ambient_radius(z: np.ndarray) -> np.ndarray:
    """``r = ||z||^(2/3)`` on V_0 and V_t."""
    z = np.asarray(z)
    return np.cbrt(np.sum(abs(z) ** 2, axis=-1))


def radius(p) -> float:
    if isinstance(p, ChartPoint):
        return float(chart_radius(p.coords))
    if isinstance(p, AmbientPoint):
        return float(ambient_radius(p.z))
    raise TypeError(f"cannot take the radius of {type(p).__name__}")


def scale(p, R: float):
    """Apply the scaling map ``S_R``.

    On the resolution the fibre coordinates are multiplied by ``R^(3/2)``; on C^4
    the whole vector is, and the fibre parameter goes ``t -> R^3 t``.
    """
    if not R > 0:
        raise ValueError("scale factor R must be positive")
    k = R**1.5
    if isinstance(p, ChartPoint):
        return ChartPoint(p.chart, p.lam, k * p.u, k * p.v)
    if isinstance(p, AmbientPoint):
        return AmbientPoint(k * p.z, p.t * R**3)
    raise TypeError(f"cannot scale {type(p).__name__}")


def scale_chart(coords: np.ndarray, R: float) -> np.ndarray:
    if not R > 0:
        raise ValueError("scale factor R must be positive")
    out = np.array(coords, dtype=complex, copy=True)
    out[..., 1:] *= R**1.5
    return out


# --------------------------------------------------------------------------
# charts and the blowdown
# --------------------------------------------------------------------------


def transition(coords: np.ndarray, chart: np.ndarray) -> np.ndarray:
    """Re-express chart points in the other chart.

    The map is an involution: ``(lam, u, v) -> (1/lam, lam u, lam v)``.
    """
    coords = np.asarray(coords, dtype=complex)
    lam = coords[..., 0]
    if np.any(lam == 0):
        raise GeometryError("points with lam = 0 are not in the overlap of the charts")
    out = np.empty_like(coords)
    out[..., 0] = 1.0 / lam
    out[..., 1] = lam * coords[..., 1]
    out[..., 2] = lam * coords[..., 2]
    return out


def to_chart(coords: np.ndarray, chart: np.ndarray, target) -> np.ndarray:
    """Express every point in the chart ``target`` (scalar or per-point array)."""
    coords = np.array(coords, dtype=complex, copy=True)
    chart = np.broadcast_to(np.asarray(chart), coords.shape[:-1])
    target = np.broadcast_to(np.asarray(target), coords.shape[:-1])
    swap = chart != target
    if np.any(swap):
        coords[swap] = transition(coords[swap], chart[swap])
    return coords


def normalize_charts(coords: np.ndarray, chart: np.ndarray):
    """Move each point to the chart in which ``|lam| <= 1``."""
    coords = np.asarray(coords, dtype=complex)
    chart = np.asarray(chart, dtype=np.int8)
    flip = abs(coords[..., 0]) > 1.0
    new_chart = np.where(flip, 1 - chart, chart).astype(np.int8)
    return to_chart(coords, chart, new_chart), new_chart


def blowdown(coords: np.ndarray, chart=Chart.U) -> np.ndarray:
    """The blowdown map to V_0, evaluated in either chart."""
    coords = np.asarray(coords, dtype=complex)
    chart = np.broadcast_to(np.asarray(chart), coords.shape[:-1])
    lam, u, v = coords[..., 0], coords[..., 1], coords[..., 2]
    z = np.empty(coords.shape[:-1] + (4,), dtype=complex)
    in_u = chart == Chart.U
    # chart U
    z[..., 0] = np.where(in_u, lam * v + u, v + lam * u)
    z[..., 1] = np.where(in_u, -1j * (lam * v - u), -1j * (v - lam * u))
    z[..., 2] = np.where(in_u, -1j * (v + lam * u), -1j * (lam * v + u))
    z[..., 3] = np.where(in_u, -(v - lam * u), -(lam * v - u))
    return z / SQRT2


def blowdown_jacobian(coords: np.ndarray, chart=Chart.U) -> np.ndarray:
    """Holomorphic Jacobian ``dz/d(lam, u, v)`` of the blowdown, shape ``(..., 4, 3)``."""
    coords = np.asarray(coords, dtype=complex)
    chart = np.broadcast_to(np.asarray(chart), coords.shape[:-1])
    lam, u, v = coords[..., 0], coords[..., 1], coords[..., 2]
    one = np.ones_like(lam)
    in_u = (chart == Chart.U)[..., None]
    ju = np.stack(
        [
            np.stack([v, one, lam], -1),
            np.stack([-1j * v, 1j * one, -1j * lam], -1),
            np.stack([-1j * u, -1j * lam, -1j * one], -1),
            np.stack([u, lam, -one], -1),
        ],
        -2,
    )
    jp = np.stack(
        [
            np.stack([u, lam, one], -1),
            np.stack([1j * u, 1j * lam, -1j * one], -1),
            np.stack([-1j * v, -1j * one, -1j * lam], -1),
            np.stack([-v, one, -lam], -1),
        ],
        -2,
    )
    return np.where(in_u[..., None], ju, jp) / SQRT2


def blowdown_inverse(z: np.ndarray, rtol: float = CONSTRAINT_RTOL):
    """Invert the blowdown away from the vertex.

    Returns ``(coords, chart)``.  The chart is ``U`` when ``|lam| <= 1`` and ``U'``
    otherwise; inside a chart ``lam`` is read off from whichever of the two
    equivalent ratios has the larger denominator.
    """
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    norm2 = np.sum(abs(z) ** 2, axis=-1)
    if np.any(norm2 == 0):
        raise GeometryError("the vertex has no preimage chart point")
    resid = abs(np.sum(z**2, axis=-1))
    if np.any(resid > rtol * np.maximum(1.0, norm2)):
        raise GeometryError("point is not on the cone V_0")

    p = z[:, 0] - 1j * z[:, 1]  # sqrt2 u        (chart U)
    q = z[:, 2] + 1j * z[:, 3]  # -i sqrt2 v
    m = z[:, 2] - 1j * z[:, 3]  # -i sqrt2 lam u
    s = z[:, 0] + 1j * z[:, 1]  # sqrt2 lam v
    use_u = np.maximum(abs(p), abs(q)) >= np.maximum(abs(m), abs(s))

    coords = np.empty((z.shape[0], 3), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_u = np.where(abs(p) >= abs(q), 1j * m / p, -1j * s / q)
        lam_p = np.where(abs(m) >= abs(s), -1j * p / m, 1j * q / s)
    coords[:, 0] = np.where(use_u, lam_u, lam_p)
    coords[:, 1] = np.where(use_u, p / SQRT2, 1j * m / SQRT2)
    coords[:, 2] = np.where(use_u, 1j * q / SQRT2, s / SQRT2)
    chart = np.where(use_u, Chart.U, Chart.Uprime).astype(np.int8)
    if single:
        return coords[0], chart[0]
    return coords, chart


def blowdown_point(p: ChartPoint) -> AmbientPoint:
    return AmbientPoint(blowdown(p.coords, p.chart), 0.0)


def blowdown_inverse_point(p: AmbientPoint) -> ChartPoint:
    if p.t != 0:
        raise GeometryError("blowdown inverse is defined on V_0 only")
    c, ch = blowdown_inverse(p.z)
    return ChartPoint(Chart(int(ch)), *c)


# --------------------------------------------------------------------------
# the smoothing maps
# --------------------------------------------------------------------------


def _norm2(z: np.ndarray) -> np.ndarray:
    return np.sum(abs(z) ** 2, axis=-1)


def phi_t(z: np.ndarray, t: complex) -> np.ndarray:
    """``z + t conj(z) / (2 ||z||^2)``; maps V_0 minus the vertex into V_t."""
    z = np.asarray(z, dtype=complex)
    s = _norm2(z)
    if np.any(s == 0):
        raise GeometryError("smoothing map is undefined at the vertex")
    return z + np.asarray(t / (2.0 * s))[..., None] * np.conj(z)


def phi(z: np.ndarray) -> np.ndarray:
    return phi_t(z, 1.0)


def phi_t_by_scaling(z: np.ndarray, t: complex) -> np.ndarray:
    """``S_{t^(1/3)} o phi o S_{t^(-1/3)}`` with principal complex roots."""
    root = np.sqrt(complex(t))
    return root * phi(np.asarray(z, dtype=complex) / root)


def phi_t_differential(z: np.ndarray, v: np.ndarray, t: complex) -> np.ndarray:
    """Real-linear differential of ``phi_t`` at ``z`` applied to ambient vectors ``v``."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    s = _norm2(z)
    ds = 2.0 * np.real(np.sum(np.conj(z) * v, axis=-1))
    return v + (t / 2.0) * (
        np.conj(v) / s[..., None] - np.conj(z) * (ds / s**2)[..., None]
    )


def _g_inverse(B: np.ndarray) -> np.ndarray:
    return 0.5 * (B + np.sqrt(B * B - 1.0))


def phi_inverse(w: np.ndarray) -> np.ndarray:
    """Inverse of ``phi`` on ``{||w||^2 > 1}`` of V_1.

    The imaginary part carries a ``+`` sign: expanding ``w = z + conj(z)/(2 g)``
    gives ``Im w = (1 - 1/(2g)) Im z``.
    """
    w = np.asarray(w, dtype=complex)
    B = _norm2(w)
    if np.any(B <= 1.0):
        raise GeometryError("phi_inverse needs ||w||^2 > 1")
    g = _g_inverse(B)[..., None]
    return (2 * g / (2 * g + 1)) * w.real + 1j * (2 * g / (2 * g - 1)) * w.imag


def phi_t_inverse(w: np.ndarray, t: complex) -> np.ndarray:
    """Inverse of ``phi_t`` from ``{r > |t|^(1/3)}`` of V_t to ``{r > (|t|/2)^(1/3)}``."""
    root = np.sqrt(complex(t))
    return root * phi_inverse(np.asarray(w, dtype=complex) / root)


def beta(t: complex, rho):
    """Radius on V_t of the image of the sphere ``{r = rho}`` under ``phi_t``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    out = np.cbrt(rho**3 + abs(t) ** 2 / (4.0 * rho**3))
    return float(out) if out.ndim == 0 else out


def beta_inverse(t: complex, r):
    """The branch ``rho >= (|t|/2)^(1/3)`` of the inverse of ``beta``."""
    r = np.asarray(r, dtype=float)
    x = r**3 / abs(t)
    if np.any(x < 1.0 - 1e-15):
        raise ValueError("radius below |t|^(1/3) is not attained on V_t")
    x = np.maximum(x, 1.0)
    out = np.cbrt(abs(t) * 0.5 * (x + np.sqrt(x * x - 1.0)))
    return float(out) if out.ndim == 0 else out


def critical_radius(t: complex) -> float:
    """``(|t|/2)^(1/3)``: below it ``phi_t`` folds onto the vanishing cycle."""
    return float(np.cbrt(abs(t) / 2.0))


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------


def _link_frames(n: int, rng: np.random.Generator):
    x = rng.standard_normal((n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.standard_normal((n, 4))
    y -= np.sum(x * y, axis=1, keepdims=True) * x
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    return x, y


def link_point(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """The cone point of radius 1 in the real direction ``(x, y)``, ``|x|=|y|=1``, ``x.y=0``."""
    return (np.asarray(x) + 1j * np.asarray(y)) / SQRT2


def sample_link(n: int, seed: int = 0, return_frames: bool = False):
    """Uniform-in-construction samples of the link ``{r = 1}`` of V_0 (S^3 x S^2)."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    x, y = _link_frames(n, rng)
    z = link_point(x, y)
    if return_frames:
        return z, x, y
    return z


def _riemann_sphere(lam: np.ndarray) -> np.ndarray:
    """Unit-sphere embedding of the P^1 coordinate (chart U)."""
    d = 1.0 + abs(lam) ** 2
    return np.stack([2 * lam.real / d, 2 * lam.imag / d, (abs(lam) ** 2 - 1) / d], -1)


@dataclass
class PointCloud:
    """A sample of one of the local models.

    ``coords``/``chart`` hold resolution chart coordinates for every node; on the
    cone and smoothing these parametrize the node through the blowdown (and
    ``phi_t``).  ``points`` holds the model point itself (chart coordinates for the
    resolution, C^4 vectors otherwise).  ``vertex`` is the index of the cone
    vertex node, if any.  ``ray``/``level`` tag nodes of ray layouts.
    """

    model: Model
    coords: np.ndarray
    chart: np.ndarray
    points: np.ndarray
    seed: int | None = None
    vertex: int | None = None
    ray: np.ndarray | None = None
    level: np.ndarray | None = None
    fill_distance: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def radii(self) -> np.ndarray:
        if isinstance(self.model, Resolution):
            return chart_radius(self.coords)
        return ambient_radius(self.points)

    def proxy(self) -> np.ndarray:
        """Real coordinates whose Euclidean distance roughly tracks the model metric."""
        return proxy_coordinates(self.model, self.coords, self.chart, self.points)

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        vertex = None
        if self.vertex is not None and np.any(idx == self.vertex):
            vertex = int(np.flatnonzero(idx == self.vertex)[0])
        return PointCloud(
            self.model,
            self.coords[idx],
            self.chart[idx],
            self.points[idx],
            self.seed,
            vertex,
            None if self.ray is None else self.ray[idx],
            None if self.level is None else self.level[idx],
            self.fill_distance,
            dict(self.meta),
        )

    def to_json(self) -> dict:
        if isinstance(self.model, Resolution):
            pts = [
                [int(ch)] + [[float(c.real), float(c.imag)] for c in row]
                for ch, row in zip(self.chart, self.coords)
            ]
        else:
            pts = [[[float(c.real), float(c.imag)] for c in row] for row in self.points]
        param = self.model.param
        return {
            "model": self.model.name,
            "t_or_a": [float(np.real(param)), float(np.imag(param))],
            "points": pts,
            "seed": self.seed,
            "fill_distance": self.fill_distance,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def load_cloud(path) -> PointCloud:
    """Read a point cloud written by :meth:`PointCloud.save`."""
    data = json.loads(Path(path).read_text())
    re, im = data["t_or_a"]
    name = data["model"]
    if name == "resolution":
        chart = np.array([row[0] for row in data["points"]], dtype=np.int8)
        coords = np.array(
            [[complex(*c) for c in row[1:]] for row in data["points"]], dtype=complex
        ).reshape(-1, 3)
        model = Resolution(re)
        return PointCloud(model, coords, chart, coords.copy(), data.get("seed"),
                          fill_distance=data.get("fill_distance", float("nan")))
    pts = np.array(
        [[complex(*c) for c in row] for row in data["points"]], dtype=complex
    ).reshape(-1, 4)
    model = Cone() if name == "cone" else Smoothing(complex(re, im))
    return embed_ambient(model, pts, seed=data.get("seed"),
                         fill_distance=data.get("fill_distance", float("nan")))


def proxy_coordinates(model: Model, coords, chart, points) -> np.ndarray:
    """Cone-flattened coordinates ``z ||z||^(-1/3)`` (norm equals ``r``).

    On the resolution the P^1 position is appended, weighted by the size of the
    zero section at scale ``a``.
    """
    if isinstance(model, Resolution):
        z = blowdown(coords, chart)
        sphere = _riemann_sphere_any(coords[..., 0], chart)
        w = _flatten(z)
        return np.concatenate([w, model.a * np.sqrt(2.0 / 3.0) * sphere], axis=-1)
    return _flatten(np.asarray(points, dtype=complex))


def _riemann_sphere_any(lam: np.ndarray, chart: np.ndarray) -> np.ndarray:
    s = _riemann_sphere(lam)
    # lam' = 1/lam reflects the sphere through the equatorial plane and conjugates
    flip = np.asarray(chart) == Chart.Uprime
    s = np.where(flip[..., None], s * np.array([1.0, -1.0, -1.0]), s)
    return s


def _flatten(z: np.ndarray) -> np.ndarray:
    s = np.sqrt(np.sum(abs(z) ** 2, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(s > 0, s ** (-1.0 / 3.0), 0.0)
    w = z * k[..., None]
    return np.concatenate([w.real, w.imag], axis=-1)


def embed_chart(model: Model, coords: np.ndarray, chart: np.ndarray) -> np.ndarray:
    """Model points parametrized by chart coordinates."""
    if isinstance(model, Resolution):
        return np.array(coords, dtype=complex, copy=True)
    z = blowdown(coords, chart)
    if isinstance(model, Cone):
        return z
    zero = _norm2(z) == 0
    if np.any(zero):
        raise GeometryError("the vertex has no image on the smoothing")
    return phi_t(z, model.t)


def embed_ambient(model: Model, z: np.ndarray, seed=None, fill_distance=float("nan")) -> PointCloud:
    """Build a cloud from ambient points of V_0 or V_t (the vertex is allowed on V_0)."""
    z = np.asarray(z, dtype=complex)
    n = z.shape[0]
    coords = np.zeros((n, 3), dtype=complex)
    chart = np.zeros(n, dtype=np.int8)
    vertex = None
    if isinstance(model, Cone):
        zero = _norm2(z) == 0
        if np.any(zero):
            vertex = int(np.flatnonzero(zero)[0])
        nz = ~zero
        if np.any(nz):
            coords[nz], chart[nz] = blowdown_inverse(z[nz])
    elif isinstance(model, Smoothing):
        z0 = smoothing_preimage(z, model.t)
        coords, chart = blowdown_inverse(z0)
    else:
        raise TypeError("ambient points belong to the cone or a smoothing")
    return PointCloud(model, coords, chart, z, seed, vertex, fill_distance=fill_distance)


def smoothing_preimage(w: np.ndarray, t: complex) -> np.ndarray:
    """Preimage on V_0 of points of V_t with ``r >= |t|^(1/3)``.

    Points on the vanishing cycle (``||w||^2 = |t|``) go to the fold radius; their
    fibre direction is resolved by taking ``y`` along ``Im(e^{-i arg t/2} w)`` when
    available and otherwise choosing a fixed orthogonal direction.
    """
    w = np.asarray(w, dtype=complex)
    at = abs(t)
    B = _norm2(w) / at
    interior = B > 1.0 + 1e-14
    out = np.empty_like(w)
    if np.any(interior):
        out[interior] = phi_t_inverse(w[interior], t)
    if np.any(~interior):
        rot = np.exp(-0.5j * np.angle(t))
        x = (rot * w[~interior]).real
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = _orthogonal_unit(x)
        c = np.sqrt(at / 2.0 / 2.0)  # s0 = |t|/2 = 2 c^2
        out[~interior] = np.conj(rot) * c * (x + 1j * y)
    return out


def _orthogonal_unit(x: np.ndarray) -> np.ndarray:
    e = np.zeros_like(x)
    idx = np.argmin(abs(x), axis=1)
    e[np.arange(x.shape[0]), idx] = 1.0
    y = e - np.sum(e * x, axis=1, keepdims=True) * x
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def smoothing_point(t: complex, x: np.ndarray, y: np.ndarray, r) -> tuple[np.ndarray, np.ndarray]:
    """Point of V_t at radius ``r`` in real direction ``(x, y)``.

    Returns ``(z, z0)``: ``z = e^{i theta/2}(alpha x + i beta y)`` with
    ``alpha^2 - beta^2 = |t|`` and ``alpha^2 + beta^2 = ||z||^2``, and its preimage
    ``z0`` on V_0 (so that ``z = phi_t(z0)``).
    """
    at = abs(t)
    s = np.asarray(r, dtype=float) ** 3
    if np.any(s < at * (1 - 1e-12)):
        raise GeometryError("radius below |t|^(1/3) is not attained on V_t")
    s = np.maximum(s, at)
    s0 = 0.5 * (s + np.sqrt(s * s - at * at))
    c = np.sqrt(s0 / 2.0)
    rot = np.exp(0.5j * np.angle(t))
    z0 = rot * c[..., None] * (x + 1j * y)
    alpha = c * (1 + at / (2 * s0))
    beta_ = c * (1 - at / (2 * s0))
    z = rot * (alpha[..., None] * x + 1j * beta_[..., None] * y)
    return z, z0


def _radial_pdf_sample(rng, n, R, a_mix=None):
    """Radii with density ``6 r^5 / R^6``, optionally mixed 10% uniform on ``[0, a_mix]``."""
    r = R * rng.random(n) ** (1.0 / 6.0)
    if a_mix is not None and a_mix > 0:
        mix = rng.random(n) < 0.1
        r[mix] = min(a_mix, R) * rng.random(int(mix.sum()))
    return r


def radial_mixture_pdf(r, R, a_mix=None):
    r = np.asarray(r, dtype=float)
    base = np.where(r <= R, 6.0 * r**5 / R**6, 0.0)
    if a_mix is None or a_mix <= 0:
        return base
    m = min(a_mix, R)
    return 0.9 * base + 0.1 * np.where(r <= m, 1.0 / m, 0.0)


def sample_tube_chart(n: int, R: float, rng, a_mix=None):
    """Random points of ``{r <= R}`` in chart U together with their chart-Lebesgue density.

    ``lam`` is uniform on the Riemann sphere, the fibre direction uniform on S^3
    and the radius drawn from :func:`radial_mixture_pdf`.
    """
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (g[:, 0] + 1j * g[:, 1]) / (1.0 - g[:, 2])
    lam = np.where(np.isfinite(lam), lam, 1e12)
    d = rng.standard_normal((n, 4))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = _radial_pdf_sample(rng, n, R, a_mix)
    A = 1.0 + abs(lam) ** 2
    rho = np.sqrt(r**3 / A)
    coords = np.stack([lam, rho * (d[:, 0] + 1j * d[:, 1]), rho * (d[:, 2] + 1j * d[:, 3])], -1)
    return coords, tube_chart_density(coords, R, a_mix)


def tube_chart_density(coords, R, a_mix=None):
    """Density of :func:`sample_tube_chart` w.r.t. Lebesgue measure on chart U (R^6)."""
    lam = coords[:, 0]
    A = 1.0 + abs(lam) ** 2
    r = chart_radius(coords)
    rho = np.sqrt(r**3 / A)
    p_lam = 1.0 / (np.pi * A**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        drho_dr = 1.5 * np.sqrt(r / A)
        p_uv = radial_mixture_pdf(r, R, a_mix) / (drho_dr * 2 * np.pi**2 * rho**3)
    return p_lam * p_uv


def _ray_levels(rng, n_levels, lo, hi, jitter=True):
    k = np.arange(1, n_levels + 1)
    if jitter:
        frac = (k - rng.random(n_levels) * 0.5) / n_levels
    else:
        frac = k / n_levels
    return lo + (hi - lo) * frac


def ray_layout_sizes(n: int, n_levels: int | None = None):
    if n_levels is None:
        n_levels = max(3, int(round(n ** (1.0 / 3.0))))
    n_dirs = max(1, n // n_levels)
    return n_dirs, n_levels


def sample_region(model: Model, region: Region, n: int, seed: int = 0,
                  layout: str = "random", n_levels: int | None = None,
                  min_fill: float | None = 1.0) -> PointCloud:
    """Sample a region of a local model.

    ``layout="random"`` draws i.i.d. points (radius density ``~ r^5``; on the
    resolution 10% of the points are placed uniformly in ``r < a``).
    ``layout="rays"`` draws link directions and places nodes along each ray at
    jittered radial levels; the cone then carries a vertex node and the
    resolution tube carries one zero-section node per ray.

    Raises :class:`GeometryError` for model/region mismatches and
    :class:`ValueError` when the fill distance exceeds ``min_fill`` times the
    outer radius.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    R = region.outer_radius
    r_in = region.inner_radius
    if isinstance(model, Resolution):
        if region.kind != RegionKind.Tube:
            raise GeometryError("the resolution is sampled on tubes")
    elif region.kind == RegionKind.Tube:
        raise GeometryError("tubes live on the resolution")
    if isinstance(model, Smoothing):
        floor = abs(model.t) ** (1.0 / 3.0)
        if r_in < floor * (1 - 1e-12):
            raise GeometryError("smoothing regions need inner_radius >= |t|^(1/3)")
        if R < floor:
            raise GeometryError("outer radius below the vanishing cycle")

    if layout == "random":
        cloud = _sample_random(model, r_in, R, n, rng)
    elif layout == "rays":
        cloud = _sample_rays(model, r_in, R, n, rng, n_levels)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    cloud.seed = seed
    cloud.fill_distance = estimate_fill_distance(cloud, region, rng)
    if min_fill is not None and cloud.fill_distance > min_fill * R:
        raise ValueError(
            f"fill distance {cloud.fill_distance:.3g} exceeds {min_fill:.0%} of the outer radius"
        )
    return cloud


def _sample_random(model, r_in, R, n, rng):
    if isinstance(model, Resolution):
        coords, _ = sample_tube_chart(4 * n if r_in > 0 else n, R, rng, a_mix=model.a)
        if r_in > 0:
            coords = coords[chart_radius(coords) >= r_in][:n]
            while coords.shape[0] < n:
                extra, _ = sample_tube_chart(n, R, rng, a_mix=model.a)
                coords = np.concatenate([coords, extra[chart_radius(extra) >= r_in]])[:n]
        chart = np.zeros(n, dtype=np.int8)
        coords, chart = normalize_charts(coords, chart)
        return PointCloud(model, coords, chart, coords.copy())

    x, y = _link_frames(n, rng)
    u = rng.random(n)
    if isinstance(model, Cone):
        r = (r_in**6 + u * (R**6 - r_in**6)) ** (1.0 / 6.0)
        z = link_point(x, y) * (r**1.5)[:, None]
        coords, chart = blowdown_inverse(z)
        return PointCloud(model, coords, chart, z)
    lo, hi = beta_inverse(model.t, max(r_in, abs(model.t) ** (1 / 3))), beta_inverse(model.t, R)
    rho = (lo**6 + u * (hi**6 - lo**6)) ** (1.0 / 6.0)
    z, z0 = smoothing_point(model.t, x, y, beta(model.t, rho))
    coords, chart = blowdown_inverse(z0)
    return PointCloud(model, coords, chart, z)


def _sample_rays(model, r_in, R, n, rng, n_levels):
    n_dirs, n_levels = ray_layout_sizes(n, n_levels)
    x, y = _link_frames(n_dirs, rng)
    zdir = link_point(x, y)
    if isinstance(model, Smoothing):
        lo = beta_inverse(model.t, max(r_in, abs(model.t) ** (1 / 3)))
        hi = beta_inverse(model.t, R)
        include_floor = r_in <= abs(model.t) ** (1 / 3) * (1 + 1e-12)
        levels = _ray_levels(rng, n_levels, lo, hi)
        levels[-1] = hi
        if include_floor:
            levels = np.concatenate([[lo], levels[:-1] if n_levels > 1 else [], [hi]])
            levels = np.unique(levels)
        z0 = (zdir[:, None, :] * (levels**1.5)[None, :, None]).reshape(-1, 4)
        z = phi_t(z0, model.t)
        coords, chart = blowdown_inverse(z0)
        ray = np.repeat(np.arange(n_dirs), levels.size)
        level = np.tile(np.arange(levels.size), n_dirs)
        cloud = PointCloud(model, coords, chart, z, ray=ray, level=level)
        cloud.meta["levels"] = levels
        return cloud

    lo = r_in
    levels = _ray_levels(rng, n_levels, lo, R)
    levels[-1] = R
    if r_in > 0:
        levels = np.concatenate([[r_in], levels])
    z_nodes = (zdir[:, None, :] * (levels**1.5)[None, :, None]).reshape(-1, 4)
    coords, chart = blowdown_inverse(z_nodes)
    ray = np.repeat(np.arange(n_dirs), levels.size)
    level = np.tile(np.arange(1, levels.size + 1) if r_in == 0 else np.arange(levels.size), n_dirs)
    if isinstance(model, Cone):
        points = z_nodes
        vertex = None
        if r_in == 0:
            coords = np.concatenate([np.zeros((1, 3), complex), coords])
            chart = np.concatenate([np.zeros(1, np.int8), chart])
            points = np.concatenate([np.zeros((1, 4), complex), points])
            ray = np.concatenate([[-1], ray])
            level = np.concatenate([[0], level])
            vertex = 0
        cloud = PointCloud(model, coords, chart, points, vertex=vertex, ray=ray, level=level)
        cloud.meta["levels"] = levels
        return cloud
    # resolution: one zero-section node per ray, same chart as the ray
    if r_in == 0:
        first = coords[::levels.size]
        e_nodes = np.zeros_like(first)
        e_nodes[:, 0] = first[:, 0]
        e_chart = chart[::levels.size]
        coords = np.concatenate([e_nodes, coords])
        chart = np.concatenate([e_chart, chart])
        ray = np.concatenate([np.arange(n_dirs), ray])
        level = np.concatenate([np.zeros(n_dirs, int), level])
    cloud = PointCloud(model, coords, chart, coords.copy(), ray=ray, level=level)
    cloud.meta["levels"] = levels
    return cloud


def estimate_fill_distance(cloud: PointCloud, region: Region, rng, n_probe: int = 500) -> float:
    """Largest proxy distance from random probe points of the region to the cloud."""
    from scipy.spatial import cKDTree

    probe = _probe_points(cloud.model, region, n_probe, rng)
    tree = cKDTree(cloud.proxy())
    d, _ = tree.query(probe)
    return float(d.max())


def _probe_points(model, region, n, rng):
    R, r_in = region.outer_radius, region.inner_radius
    if isinstance(model, Resolution):
        coords, _ = sample_tube_chart(4 * n, R, rng)
        coords = coords[chart_radius(coords) >= r_in][:n]
        chart = np.zeros(coords.shape[0], np.int8)
        return proxy_coordinates(model, coords, chart, coords)
    x, y = _link_frames(n, rng)
    u = rng.random(n)
    if isinstance(model, Cone):
        r = (r_in**6 + u * (R**6 - r_in**6)) ** (1.0 / 6.0)
        return _flatten(link_point(x, y) * (r**1.5)[:, None])
    lo = beta_inverse(model.t, max(r_in, abs(model.t) ** (1 / 3)))
    hi = beta_inverse(model.t, R)
    rho = (lo**6 + u * (hi**6 - lo**6)) ** (1.0 / 6.0)
    z, _ = smoothing_point(model.t, x, y, beta(model.t, rho))
    return _flatten(z)
