"""Experiment runners behind the command-line harness.

Each runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult`: table rows (each tagged with an ``anchor`` naming the
quantity it reports), assertions, and auxiliary tables for plotting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cdlo_metrics as cm
from . import discrete_geometry as dg
from . import gh_analysis as gh
from . import local_models as lm

# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

EXPERIMENTS = (
    "profile-check",
    "radial-geodesic",
    "scaling-identities",
    "decay-fit-sr",
    "decay-fit-sm",
    "tube-diameter",
    "disc-diameter",
    "volume-scaling",
    "curve-reduction-fuzz",
    "gh-sweep-sr",
    "gh-sweep-sm",
    "uniform-convergence",
    "main-lemma-audit",
)

# key -> (type, default)
CONFIG_KEYS = {
    "experiment": (str, None),
    "a": (list, [0.3, 0.1, 0.05]),
    "t": (list, [0.3, 0.05]),
    "n": (int, 3000),
    "k_neighbors": (int, 12),
    "seed": (int, 0),
    "out": (str, "out"),
    "n_samples": (int, 1000),
    "r_min": (float, 5.0),
    "r_max": (float, 100.0),
    "n_radii": (int, 12),
    "delta": (list, [0.5, 0.7, 1.0]),
    "audit_a": (list, [0.1, 0.05]),
    "eps": (float, 0.8),
    "delta_fraction": (float, 0.4),
    "trials": (int, 1000),
    "mc_samples": (int, 400000),
    "beta": (float, 0.5),
    "conformal_delta": (float, 0.1),
    "n_list": (list, [1000, 2000, 4000]),
    "tol_profile": (float, 1e-12),
    "tol_identity": (float, 1e-10),
    "tol_tensor": (float, 1e-8),
    "tol_speed": (float, 1e-8),
    "tol_radial": (float, 0.03),
    "tol_diameter": (float, 0.05),
    "tol_refine": (float, 0.03),
    "tol_pushforward": (float, 1e-10),
    "tol_volume": (float, 0.05),
    "tol_exponent": (float, 0.1),
    "slope_sr": (float, -2.0),
    "slope_sm": (float, -3.0),
    "tol_slope_sr": (float, 0.2),
    "tol_slope_sm": (float, 0.3),
    "gh_ratio": (float, 0.5),
    "gh_fraction": (float, 0.1),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Flat key/value configuration; see ``CONFIG_KEYS`` for keys and defaults."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        vals = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in CONFIG_KEYS.items()}
        for key, value in raw.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            typ = CONFIG_KEYS[key][0]
            try:
                vals[key] = _coerce(typ, value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
        cfg = cls(vals)
        cfg.validate()
        return cfg

    @classmethod
    def parse(cls, text: str, overrides: dict | None = None) -> "ExperimentConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        raw.update(overrides or {})
        return cls.from_mapping(raw)

    def validate(self) -> None:
        exp = self.values["experiment"]
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}")
        for key in ("a", "t", "delta", "n_list", "audit_a"):
            if len(self.values[key]) == 0:
                raise ConfigError(f"{key} must be nonempty")
        if any(not a > 0 for a in self.values["a"]):
            raise ConfigError("a values must be positive")
        if any(abs(t) == 0 for t in self.values["t"]):
            raise ConfigError("t values must be nonzero")
        for key, (typ, _) in CONFIG_KEYS.items():
            if key.startswith("tol_") and not self.values[key] > 0:
                raise ConfigError(f"{key} must be positive")
        if self.values["n"] < 1 or self.values["k_neighbors"] < 6:
            raise ConfigError("need n >= 1 and k_neighbors >= 6")

    def as_text(self) -> str:
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, list):
                v = ",".join(_fmt(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(x):
    if isinstance(x, complex):
        return repr(x).strip("()")
    return repr(x)


def _coerce(typ, value):
    if typ is list:
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [s for s in str(value).split(",") if s.strip()]
        return [_number(x) for x in items]
    if isinstance(value, typ):
        return value
    if typ is int:
        return int(str(value))
    if typ is float:
        return float(str(value))
    return str(value)


def _number(x):
    if isinstance(x, (int, float, complex)):
        return x
    s = str(x).strip()
    try:
        return float(s)
    except ValueError:
        return complex(s.replace(" ", ""))


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass
class Assertion:
    name: str
    anchor: str
    measured: float
    tolerance: float
    passed: bool
    relation: str = "<="

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "measured": _jsonable(self.measured),
            "tolerance": _jsonable(self.tolerance),
            "relation": self.relation,
            "pass": bool(self.passed),
        }


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@dataclass
class ExperimentResult:
    """Rows of the main table plus assertions and extra tables."""

    experiment: str
    columns: list
    rows: list
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    plot: dict | None = None
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def check(self, name, anchor, measured, tol, relation="<="):
        ok = {
            "<=": lambda: measured <= tol,
            "<": lambda: measured < tol,
            ">=": lambda: measured >= tol,
            "==": lambda: measured == tol,
        }[relation]()
        self.assertions.append(Assertion(name, anchor, float(measured), float(tol), bool(ok), relation))
        return ok


def fit_slope(pairs) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must be (x, y) rows")
    if pairs.shape[0] < 3:
        raise ValueError("need at least three pairs")
    if np.any(pairs <= 0):
        raise ValueError("pairs must be positive")
    X, Y = np.log(pairs[:, 0]), np.log(pairs[:, 1])
    A = np.stack([X, np.ones_like(X)], -1)
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    dof = X.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    se = np.sqrt(s2 / float(np.sum((X - X.mean()) ** 2)))
    return float(coef[0]), float(se)


# --------------------------------------------------------------------------
# runners
# --------------------------------------------------------------------------


def run_profile_check(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("profile-check", ["quantity", "value", "anchor"], [])
    prof = cm.ResolutionProfile.build(1e9, 200)
    resid = float(prof.residual().max())
    p0 = prof.p[0]
    x_hi = prof.x[-1]
    asym = abs(np.cbrt(x_hi) * prof.p[-1] - 1.0)
    qres = float(prof.q_residual().max())
    c1 = prof.fit_log_coefficient()
    for q, v, anc in [
        ("max_cubic_residual", resid, "resolution-profile-cubic"),
        ("p0_error", abs(p0 - 6**-0.5), "resolution-profile-origin"),
        ("asymptotic_error_1e9", asym, "resolution-profile-asymptotics"),
        ("max_q_residual", qres, "resolution-profile-q-form"),
        ("fitted_log_coefficient", c1, "resolution-potential-expansion"),
    ]:
        res.rows.append([q, v, anc])
    res.check("cubic residual", "resolution-profile-cubic", resid, cfg["tol_profile"], "<")
    res.check("p(0) = 6^-1/2", "resolution-profile-origin", abs(p0 - 6**-0.5), 1e-15)
    res.check("x^1/3 p - 1 at 1e9", "resolution-profile-asymptotics", asym, 1e-2, "<")
    res.check("q^3 + 6 q^2 = x^2", "resolution-profile-q-form", qres, 1e-10)
    res.tables["resolution_profile"] = (["x", "p", "dp"], np.c_[prof.x, prof.p, prof.dp].tolist())

    for t in cfg["t"]:
        at = abs(t)
        f0 = cm.smoothing_profile_value(t, at)
        grid = at * np.logspace(0, 3, 100)
        ft = cm.smoothing_profile_value(t, grid)
        f1 = cm.smoothing_profile_value(1.0, grid / at)
        scal = float(np.max(np.abs(ft - at ** (2 / 3) * f1)))
        lim = (2 / 3) ** (1 / 3) * at ** (-1 / 3)
        d1 = cm.smoothing_profile_d1(t, at * (1 + 1e-8))
        rel = abs(d1 - lim) / lim
        res.rows += [
            [f"f_t(|t|) t={t}", f0, "smoothing-profile-origin"],
            [f"scaling_error t={t}", scal, "smoothing-profile-scaling"],
            [f"d1_limit_rel_error t={t}", rel, "smoothing-profile-limit"],
        ]
        res.check(f"f_t(|t|) = 0 (t={t})", "smoothing-profile-origin", abs(f0), 0.0, "==")
        res.check(f"f_t scaling (t={t})", "smoothing-profile-scaling", scal, cfg["tol_identity"])
        res.check(f"f_t' limit (t={t})", "smoothing-profile-limit", rel, 1e-4)
    sp = cm.SmoothingProfile.build(cfg["t"][0])
    res.tables["smoothing_profile"] = (["s", "f_t", "df_t", "d2f_t"],
                                       np.c_[sp.s, sp.f, sp.df, sp.d2f].tolist())
    res.plot = {"table": "resolution_profile", "x": 1, "y": 2, "logx": True,
                "xlabel": "x", "ylabel": "p(x)"}
    return res


def run_radial_geodesic(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("radial-geodesic", ["quantity", "value", "anchor"], [])
    z = lm.sample_link(20, cfg["seed"])
    rng = np.random.default_rng(cfg["seed"])
    scales = rng.uniform(0.3, 3.0, z.shape[0])
    worst = 0.0
    for zi, c in zip(z, scales):
        p = zi * c**1.5
        rho = float(np.cbrt(np.sum(abs(p) ** 2)))
        curve = cm.radial_curve(p, 0.05, 1.0)
        sp = cm.curve_speed(curve, cm.ConeMetric(), np.linspace(0.05, 1.0, 41))
        worst = max(worst, float(np.max(np.abs(sp - rho)) / rho))
    res.rows.append(["max_relative_speed_deviation", worst, "radial-path-speed"])
    res.check("radial speed constant = rho", "radial-path-speed", worst, cfg["tol_speed"])

    cloud = lm.sample_region(lm.Cone(), lm.Region.disc(1.0), cfg["n"], cfg["seed"], layout="rays")
    G = dg.build_graph(cloud, cfg["k_neighbors"])
    from scipy.sparse import csgraph

    d = csgraph.dijkstra(G.csr, indices=cloud.vertex)
    r = cloud.radii
    nv = np.flatnonzero(np.arange(len(cloud)) != cloud.vertex)
    rel = np.abs(d[nv] - r[nv]) / r[nv]
    res.rows.append(["max_relative_graph_error", float(rel.max()), "radial-graph-distance"])
    res.rows.append(["median_relative_graph_error", float(np.median(rel)), "radial-graph-distance"])
    res.check("graph distance vertex->p = r(p)", "radial-graph-distance", float(rel.max()),
              cfg["tol_radial"])
    order = np.argsort(r[nv])
    res.tables["radial"] = (["r", "graph_distance"], np.c_[r[nv][order], d[nv][order]].tolist())
    res.plot = {"table": "radial", "x": 1, "y": 2, "xlabel": "r(p)", "ylabel": "graph distance"}
    return res


def run_scaling_identities(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("scaling-identities", ["quantity", "value", "anchor"], [])
    rng = np.random.default_rng(cfg["seed"])
    N = cfg["n_samples"]
    z = lm.sample_link(N, cfg["seed"]) * (rng.uniform(0.2, 3.0, N) ** 1.5)[:, None]
    R = rng.uniform(0.2, 5.0, N)
    t = rng.uniform(0.05, 2.0, N) * np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    r = lm.ambient_radius(z)
    e = {}
    e["r(S_R z) = R r"] = np.abs(lm.ambient_radius(z * (R**1.5)[:, None]) - R * r) / (R * r)
    w = lm.phi_t(z, t)
    e["r(phi_t z) = beta"] = np.abs(lm.ambient_radius(w) - lm.beta(t, r)) / lm.beta(t, r)
    e["sum (phi_t z)^2 = t"] = np.abs(np.sum(w**2, axis=1) - t) / np.maximum(1, np.sum(abs(w) ** 2, 1))
    ww = lm.phi(z)
    ww = ww[np.sum(abs(ww) ** 2, 1) > 1.01]
    e["phi(phi^-1 w) = w"] = np.abs(lm.phi(lm.phi_inverse(ww)) - ww).max(axis=1) / np.linalg.norm(ww, axis=1)
    coords, chart = lm.blowdown_inverse(z)
    e["pi^-1 pi = id"] = np.abs(lm.blowdown_inverse(lm.blowdown(coords, chart))[0] - coords).max(axis=1)
    anchors = ["scaling-radius", "smoothing-radius", "smoothing-constraint",
               "smoothing-map-inverse", "blowdown-inverse"]
    for (name, v), anc in zip(e.items(), anchors):
        m = float(np.max(v))
        res.rows.append([name, m, anc])
        res.check(name, anc, m, cfg["tol_identity"])

    n_t = min(N, 500)
    a_vals = rng.uniform(0.1, 3.0, n_t)
    c = rng.standard_normal((n_t, 3)) + 1j * rng.standard_normal((n_t, 3))
    worst_sr = 0.0
    for a, ci in zip(a_vals, c):
        p = lm.ChartPoint(lm.Chart.U, *ci)
        g1 = cm.metric_resolution(a, p).gram
        g2 = cm.metric_resolution_by_scaling(a, p).gram
        worst_sr = max(worst_sr, float(np.abs(g1 - g2).max() / np.abs(g1).max()))
    worst_sm = 0.0
    x, y = lm._link_frames(n_t, rng)
    tt = rng.uniform(0.05, 2.0, n_t) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_t))
    rr = lm.beta(tt, rng.uniform(0.0, 3.0, n_t) + np.cbrt(np.abs(tt) / 2.0) * 1.0001)
    for ti, xi, yi, ri in zip(tt, x, y, rr):
        zi, _ = lm.smoothing_point(ti, xi, yi, ri)
        g1 = cm.metric_smoothing(ti, zi).gram
        g2 = cm.metric_smoothing_by_scaling(ti, zi).gram
        worst_sm = max(worst_sm, float(np.abs(g1 - g2).max() / np.abs(g1).max()))
    res.rows.append(["resolution_two_route_error", worst_sr, "resolution-normalization"])
    res.rows.append(["smoothing_two_route_error", worst_sm, "smoothing-normalization"])
    res.check("resolution metric two routes", "resolution-normalization", worst_sr, cfg["tol_tensor"])
    res.check("smoothing metric two routes", "smoothing-normalization", worst_sm, cfg["tol_tensor"])
    return res


def decay_constant(radii, sups, level: float = 0.5) -> float:
    """Smallest grid radius beyond which every sup stays below ``level``."""
    radii = np.asarray(radii)
    sups = np.asarray(sups)
    bad = np.flatnonzero(sups >= level)
    if bad.size == 0:
        return float(radii[0])
    if bad[-1] + 1 >= radii.size:
        return float("inf")
    return float(radii[bad[-1] + 1])


def _decay(cfg, which):
    res = ExperimentResult(f"decay-fit-{which}", ["r", "sup_difference", "anchor"], [])
    z = lm.sample_link(cfg["n_samples"], cfg["seed"])
    radii = np.logspace(np.log10(cfg["r_min"]), np.log10(cfg["r_max"]), cfg["n_radii"])
    anc = "resolution-decay" if which == "sr" else "smoothing-decay"

    def sup_at(r):
        p = z * r**1.5
        if which == "sr":
            return float(cm.resolution_cone_difference(*lm.blowdown_inverse(p), 1.0).max())
        return float(cm.smoothing_cone_difference(p, 1.0).max())

    sups = np.array([sup_at(r) for r in radii])
    for r, s in zip(radii, sups):
        res.rows.append([float(r), float(s), anc])
    slope, se = fit_slope(np.c_[radii, sups])
    target = cfg["slope_sr"] if which == "sr" else cfg["slope_sm"]
    tol = cfg["tol_slope_sr"] if which == "sr" else cfg["tol_slope_sm"]
    res.check(f"log-log slope {target}", anc, abs(slope - target), tol)
    kgrid = np.logspace(-1, 2, 61)
    if which == "sm":
        kgrid = kgrid[kgrid > lm.critical_radius(1.0) * 1.001]
    ksups = np.array([sup_at(r) for r in kgrid])
    K = decay_constant(kgrid, ksups)
    res.reports["fit"] = {"slope": slope, "stderr": se, "K": K, "K_level": 0.5}
    res.tables["decay"] = (["r", "sup_difference"], np.c_[radii, sups].tolist())
    res.plot = {"table": "decay", "x": 1, "y": 2, "logx": True, "logy": True,
                "xlabel": "r", "ylabel": "sup |g - g_0|"}
    return res


def run_decay_sr(cfg):
    return _decay(cfg, "sr")


def run_decay_sm(cfg):
    return _decay(cfg, "sm")


def calibrated_K(seed: int = 0, n: int = 200) -> float:
    z = lm.sample_link(n, seed)
    kgrid = np.logspace(-1, 2, 61)
    sups = [float(cm.resolution_cone_difference(*lm.blowdown_inverse(z * r**1.5), 1.0).max())
            for r in kgrid]
    return decay_constant(kgrid, sups)


def pushforward_tube(cloud: lm.PointCloud, a: float) -> lm.PointCloud:
    """Image of a tube cloud under ``S_a`` (fibre coordinates scaled by ``a^(3/2)``)."""
    coords = lm.scale_chart(cloud.coords, a)
    return lm.PointCloud(lm.Resolution(a), coords, cloud.chart.copy(), coords.copy(), cloud.seed,
                         None, cloud.ray, cloud.level, cloud.fill_distance * a)


def run_tube_diameter(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("tube-diameter", ["a", "diam_a", "a_times_diam_1", "rel_error", "anchor"], [])
    K = calibrated_K(cfg["seed"])
    n = min(cfg["n"], 2000)
    base = lm.sample_region(lm.Resolution(1.0), lm.Region.tube(K), n, cfg["seed"], layout="rays")
    G1 = dg.build_graph(base, cfg["k_neighbors"])
    d1 = dg.intrinsic_diameter(G1)
    worst = 0.0
    for a in cfg["a"]:
        cl = pushforward_tube(base, a)
        Ga = dg.build_graph(cl, cfg["k_neighbors"], edges=G1.edges)
        da = dg.intrinsic_diameter(Ga)
        rel = abs(da - a * d1) / (a * d1)
        worst = max(worst, rel)
        res.rows.append([a, da, a * d1, rel, "tube-diameter-scaling"])
    res.reports["K"] = K
    res.reports["diam_1"] = d1
    res.check("diam_a(T(aK)) = a diam_1(T(K))", "tube-diameter-scaling", worst, cfg["tol_pushforward"])
    return res


def run_disc_diameter(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("disc-diameter", ["n", "delta", "diameter", "ratio_to_2delta", "anchor"], [])
    diams = []
    for n in cfg["n_list"]:
        cloud = lm.sample_region(lm.Cone(), lm.Region.disc(1.0), int(n), cfg["seed"], layout="rays")
        G = dg.build_graph(cloud, cfg["k_neighbors"])
        dfull = None
        for delta in cfg["delta"]:
            sub = np.flatnonzero(cloud.radii <= delta)
            d = dg.intrinsic_diameter(G, sub)
            if delta == max(cfg["delta"]):
                dfull = d
            res.rows.append([int(n), delta, d, d / (2 * delta), "cone-disc-diameter"])
        diams.append(dfull)
    last = res.rows[-len(cfg["delta"]):]
    worst = max(abs(r[3] - 1.0) for r in last)
    res.check("diam D_0(delta) = 2 delta", "cone-disc-diameter", worst, cfg["tol_diameter"])
    if len(diams) >= 2:
        ch = abs(diams[-1] - diams[-2]) / diams[-1]
        res.reports["refinement_change"] = ch
        res.check("mesh refinement change", "cone-disc-diameter", ch, cfg["tol_refine"], "<")
    return res


def run_volume_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("volume-scaling", ["kind", "param", "volume", "std_error", "ratio", "anchor"], [])
    K = calibrated_K(cfg["seed"])
    N = cfg["mc_samples"]
    v1 = dg.monte_carlo_volume(lm.Resolution(1.0), lm.Region.tube(K), n=N, seed=cfg["seed"])
    res.rows.append(["tube", 1.0, v1.estimate, v1.std_error, 1.0, "tube-volume-scaling"])
    for i, a in enumerate([0.5, 0.25]):
        va = dg.monte_carlo_volume(lm.Resolution(a), lm.Region.tube(a * K), n=N, seed=cfg["seed"] + 1 + i)
        ratio = va.estimate / v1.estimate / a**6
        res.rows.append(["tube", a, va.estimate, va.std_error, ratio, "tube-volume-scaling"])
        res.check(f"Vol_a(T(aK)) / a^6 Vol_1(T(K)) (a={a})", "tube-volume-scaling",
                  abs(ratio - 1.0), cfg["tol_volume"])
    pairs = []
    for i, d in enumerate(cfg["delta"]):
        v = dg.monte_carlo_volume(lm.Cone(), lm.Region.disc(d), n=N, seed=cfg["seed"] + 10 + i)
        pairs.append((d, v.estimate))
        res.rows.append(["cone-disc", d, v.estimate, v.std_error, v.estimate / d**6, "cone-disc-volume"])
    slope, se = fit_slope(pairs)
    res.reports["cone_exponent"] = {"slope": slope, "stderr": se}
    res.check("cone disc volume exponent 6", "cone-disc-volume", abs(slope - 6.0), cfg["tol_exponent"])
    res.reports["K"] = K
    return res


def random_connected_graph(rng, m: int, p: float = 0.3) -> dg.GeodesicGraph:
    """Random connected graph: a random spanning tree plus extra edges, random weights."""
    perm = rng.permutation(m)
    e = [(perm[i], perm[rng.integers(0, i)]) for i in range(1, m)]
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < p:
                e.append((i, j))
    e = dg._canonical_edges(np.array(e))
    w = rng.uniform(0.1, 2.0, e.shape[0])
    return dg.GeodesicGraph(None, m, e, w)


def random_bad_sets(rng, G: dg.GeodesicGraph, k: int) -> dg.BadSetFamily:
    taken = np.zeros(G.n, dtype=bool)
    sets = []
    for _ in range(k):
        free = np.flatnonzero(~taken)
        if free.size == 0:
            break
        s = int(rng.choice(free))
        members = [s]
        taken[s] = True
        target = int(rng.integers(1, 5))
        frontier = [s]
        while frontier and len(members) < target:
            u = frontier.pop(int(rng.integers(0, len(frontier))))
            for v in G.neighbors(u):
                if not taken[v] and len(members) < target:
                    taken[v] = True
                    members.append(int(v))
                    frontier.append(int(v))
        sets.append(members)
    return dg.BadSetFamily(sets)


def random_walk(rng, G: dg.GeodesicGraph, length: int) -> list[int]:
    path = [int(rng.integers(0, G.n))]
    for _ in range(length - 1):
        nb = G.neighbors(path[-1])
        path.append(int(rng.choice(nb)))
    return path


def run_curve_reduction(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("curve-reduction-fuzz", ["quantity", "value", "anchor"], [])
    rng = np.random.default_rng(cfg["seed"])
    ok_interval = ok_length = ok_ends = 0
    worst_slack = np.inf
    for _ in range(cfg["trials"]):
        G = random_connected_graph(rng, int(rng.integers(6, 20)), float(rng.uniform(0.1, 0.4)))
        Q = random_bad_sets(rng, G, int(rng.integers(1, 4)))
        gamma = random_walk(rng, G, int(rng.integers(2, 30)))
        mu = dg.reduce_curve(G, gamma, Q)
        lab = Q.labels(G.n)
        ok_interval += all(dg.visit_intervals(mu, lab, k) <= 1 for k in range(len(Q)))
        ok_ends += mu[0] == gamma[0] and mu[-1] == gamma[-1]
        bound = G.path_length(gamma) + sum(dg.intrinsic_diameter(G, q) for q in Q.sets)
        slack = bound - G.path_length(mu)
        worst_slack = min(worst_slack, slack)
        ok_length += slack >= -1e-12
    T = cfg["trials"]
    res.rows += [["single_interval_trials", ok_interval, "curve-reduction-intervals"],
                 ["length_bound_trials", ok_length, "curve-reduction-length"],
                 ["endpoint_trials", ok_ends, "curve-reduction-endpoints"],
                 ["min_length_slack", worst_slack, "curve-reduction-length"]]
    res.check("single-interval visitation", "curve-reduction-intervals", ok_interval, T, "==")
    res.check("length bound", "curve-reduction-length", ok_length, T, "==")
    res.check("endpoints preserved", "curve-reduction-endpoints", ok_ends, T, "==")
    return res


def run_gh_sweep_sr(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("gh-sweep-sr", ["a", "epsilon", "metric_distortion", "density_gap",
                                           "witness_i", "witness_j", "anchor"], [])
    cone = gh.cone_mesh(cfg["n"], cfg["k_neighbors"], cfg["seed"])
    eps = {}
    for a in sorted(cfg["a"], reverse=True):
        P = gh.resolution_matched(a, cfg["n"], cfg["k_neighbors"], cfg["seed"], cone=cone)
        rep = gh.distortion(P.candidate())
        eps[a] = rep.epsilon
        res.rows.append([a, rep.epsilon, rep.metric_distortion, rep.density_gap,
                         rep.pair_witness[0], rep.pair_witness[1], "resolution-gh-convergence"])
        res.reports[f"a={a}"] = rep.to_dict()
    _gh_assertions(res, eps, cone.diameter, cfg, "resolution-gh-convergence")
    res.tables["gh"] = (["a", "epsilon"], [[a, eps[a]] for a in sorted(eps)])
    res.plot = {"table": "gh", "x": 1, "y": 2, "xlabel": "a", "ylabel": "epsilon"}
    return res


def run_gh_sweep_sm(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("gh-sweep-sm", ["t", "epsilon", "metric_distortion", "density_gap",
                                           "witness_i", "witness_j", "anchor"], [])
    cone = gh.cone_mesh(cfg["n"], cfg["k_neighbors"], cfg["seed"])
    eps = {}
    for t in sorted(cfg["t"], key=abs, reverse=True):
        P = gh.smoothing_matched(t, cfg["n"], cfg["k_neighbors"], cfg["seed"], cone=cone)
        rep = gh.distortion(P.candidate())
        eps[abs(t)] = rep.epsilon
        res.rows.append([_fmt_param(t), rep.epsilon, rep.metric_distortion, rep.density_gap,
                         rep.pair_witness[0], rep.pair_witness[1], "smoothing-gh-convergence"])
        res.reports[f"t={t}"] = rep.to_dict() | {"mesh": {k: str(v) for k, v in P.info.items()}}
    _gh_assertions(res, eps, cone.diameter, cfg, "smoothing-gh-convergence")
    res.tables["gh"] = (["abs_t", "epsilon"], [[t, eps[t]] for t in sorted(eps)])
    res.plot = {"table": "gh", "x": 1, "y": 2, "xlabel": "|t|", "ylabel": "epsilon"}
    return res


def _fmt_param(t):
    t = complex(t)
    return t.real if t.imag == 0 else str(t)


def _gh_assertions(res, eps: dict, diam0: float, cfg, anchor):
    keys = sorted(eps, reverse=True)
    strict = all(eps[keys[i + 1]] < eps[keys[i]] for i in range(len(keys) - 1))
    res.check("epsilon strictly decreasing", anchor, float(strict), 1.0, "==")
    lo, hi = keys[-1], keys[0]
    res.check(f"eps({lo}) <= {cfg['gh_ratio']} eps({hi})", anchor, eps[lo] / eps[hi], cfg["gh_ratio"])
    res.check(f"eps({lo}) < {cfg['gh_fraction']} diam(D_0(1))", anchor, eps[lo] / diam0,
              cfg["gh_fraction"], "<")
    res.reports["diam_cone"] = diam0


def run_uniform_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("uniform-convergence", ["alpha", "eps", "eps_prime", "diam_beta", "max_abs_diff",
                                                   "bound", "empirical_constant", "anchor"], [])
    b = cfg["beta"]
    n = min(cfg["n"], 2000)
    cloud = lm.sample_region(lm.Resolution(b), lm.Region.tube(1.0), n, cfg["seed"], layout="rays")
    G = dg.build_graph(cloud, cfg["k_neighbors"])
    S = dg.all_pairs_distances(G)
    beta = cm.ResolutionMetric(b)
    d = cfg["conformal_delta"]
    conf = cm.ScaledMetric(beta, (1 + d) ** 2)
    rep = gh.uniform_convergence_check(S, conf, beta)
    Ga = dg.build_graph(cloud, cfg["k_neighbors"], metric=conf, edges=G.edges)
    Da = dg.all_pairs_distances(Ga).D
    exact = float(np.max(np.abs(Da - (1 + d) * S.D)) / max(S.diameter, 1e-300))
    res.rows.append([f"conformal {1 + d}^2", rep.eps, rep.eps_prime, rep.diam_beta, rep.max_abs_diff,
                     rep.bound, rep.empirical_constant, "continuity-conformal"])
    res.check("conformal: d_alpha = (1+delta) d_beta", "continuity-conformal", exact, 1e-12)
    res.check("conformal: bound holds", "continuity-conformal", float(rep.holds), 1.0, "==")
    for a in [b * 0.9, b * 1.1]:
        rep = gh.uniform_convergence_check(S, cm.ResolutionMetric(a), beta)
        res.rows.append([a, rep.eps, rep.eps_prime, rep.diam_beta, rep.max_abs_diff, rep.bound,
                         rep.empirical_constant, "continuity-resolution"])
        res.reports[f"alpha={a}"] = rep.to_dict()
        res.check(f"|d_a - d_b| <= (1+eps') diam eps (a={a:.3g})", "continuity-resolution",
                  rep.max_abs_diff, rep.bound)
    return res


def run_main_lemma_audit(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("main-lemma-audit", ["alpha", "diam0_G", "diam_alpha_preimage", "sup_complement",
                                                "flags_ok", "map_epsilon", "bound", "conclusion",
                                                "anchor"], [])
    eps = cfg["eps"]
    delta = cfg["delta_fraction"] * eps
    cone = gh.cone_mesh(cfg["n"], cfg["k_neighbors"], cfg["seed"])
    Gset = gh.disc_nodes(cone, delta)
    fam = [(a, gh.resolution_matched(a, cfg["n"], cfg["k_neighbors"], cfg["seed"], cone=cone))
           for a in sorted(cfg["audit_a"], reverse=True)]
    audit = gh.main_lemma_audit(fam, [Gset], eps)
    for r in audit.records:
        ok = all(r.flags.values())
        res.rows.append([r.alpha, r.diam0_G[0], r.diam_alpha_preimage[0], r.sup_complement, ok,
                         r.map_epsilon, r.bound, r.conclusion_holds, "main-lemma"])
        res.check(f"hypotheses (a={r.alpha})", "main-lemma", float(ok), 1.0, "==")
        res.check(f"distortion <= 3 eps (a={r.alpha})", "main-lemma", r.map_epsilon, r.bound)
    res.reports["audit"] = audit.to_dict()
    res.reports["delta"] = delta
    # node-wise sups miss at most a fill-distance-sized neighbourhood of each node
    res.reports["fill_distance"] = {f"a={a}": float(P.source.cloud.fill_distance) for a, P in fam}
    return res


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "profile-check": run_profile_check,
    "radial-geodesic": run_radial_geodesic,
    "scaling-identities": run_scaling_identities,
    "decay-fit-sr": run_decay_sr,
    "decay-fit-sm": run_decay_sm,
    "tube-diameter": run_tube_diameter,
    "disc-diameter": run_disc_diameter,
    "volume-scaling": run_volume_scaling,
    "curve-reduction-fuzz": run_curve_reduction,
    "gh-sweep-sr": run_gh_sweep_sr,
    "gh-sweep-sm": run_gh_sweep_sm,
    "uniform-convergence": run_uniform_convergence,
    "main-lemma-audit": run_main_lemma_audit,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    start = time.perf_counter()
    try:
        result = RUNNERS[cfg.experiment](cfg)
    except Exception as exc:
        raise RuntimeError(f"experiment {cfg.experiment!r} failed: {exc}") from exc
    result.runtime = time.perf_counter() - start
    return result
