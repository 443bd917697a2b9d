"""Gromov--Hausdorff tools for finite metric spaces and the local-model families.

The GH distance used throughout is the two-sided one: ``d_GH(X, Y) < eps`` when
there are eps-isometries ``X -> Y`` and ``Y -> X``.  A map ``f`` is an
eps-isometry when it distorts every pairwise distance by less than eps and its
image is eps-dense.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cdlo_metrics import (
    MetricModel,
    diff_norm_batch,
    edge_path,
    metric_model,
)
from .discrete_geometry import (
    SampledSpace,
    all_pairs_distances,
    build_graph,
    intrinsic_diameter,
    knn_edges,
    ray_chain_edges,
    _canonical_edges,
    align_charts,
)
from .local_models import (
    Cone,
    PointCloud,
    Region,
    Resolution,
    Smoothing,
    blowdown_inverse,
    critical_radius,
    link_point,
    phi_t,
    sample_region,
)


# --------------------------------------------------------------------------
# maps and distortion
# --------------------------------------------------------------------------


@dataclass
class CandidateMap:
    """A map between the node sets of two sampled spaces."""

    domain: SampledSpace
    codomain: SampledSpace
    mapping: np.ndarray

    def __post_init__(self):
        self.mapping = np.asarray(self.mapping, dtype=np.int64)
        if self.mapping.shape != (len(self.domain),):
            raise ValueError("every domain node must be mapped")
        if self.mapping.size and (self.mapping.min() < 0 or self.mapping.max() >= len(self.codomain)):
            raise ValueError("codomain index out of range")


@dataclass
class DistortionReport:
    metric_distortion: float
    density_gap: float
    epsilon: float
    pair_witness: tuple
    node_witness: int

    def to_dict(self) -> dict:
        return asdict(self)


def distortion(f: CandidateMap, domain: SampledSpace | None = None,
               codomain: SampledSpace | None = None, chunk: int = 512) -> DistortionReport:
    """Exact distortion and density gap of ``f``; ties resolve to the lowest index.

    ``domain``/``codomain``, when given, must be the spaces ``f`` was built on.
    """
    if (domain is not None and domain is not f.domain) or (codomain is not None and codomain is not f.codomain):
        raise ValueError("map was built on different spaces")
    DX, DY, m = f.domain.D, f.codomain.D, f.mapping
    n = DX.shape[0]
    best, wit = 0.0, (0, 0)
    for s in range(0, n, chunk):
        rows = np.arange(s, min(s + chunk, n))
        diff = np.abs(DX[rows] - DY[np.ix_(m[rows], m)])
        k = int(np.argmax(diff))
        val = float(diff.flat[k])
        if val > best:
            best, wit = val, (int(rows[k // n]), int(k % n))
    if n == 0:
        wit = (0, 0)
    image = np.unique(m)
    gaps = DY[:, image].min(axis=1) if image.size else np.full(DY.shape[0], np.inf)
    y = int(np.argmax(gaps))
    gap = float(gaps[y])
    return DistortionReport(best, gap, max(best, gap), wit, y)


def approximate_inverse(f: CandidateMap) -> CandidateMap:
    """``g(y)`` = lowest-index ``x`` with ``f(x)`` nearest to ``y``."""
    DY = f.codomain.D
    sub = DY[:, f.mapping]
    return CandidateMap(f.codomain, f.domain, np.argmin(sub, axis=1))


@dataclass
class GHBound:
    value: float
    eps_f: float
    eps_g: float
    one_sided: bool
    three_eps: float | None = None
    three_eps_holds: bool | None = None

    def __float__(self) -> float:
        return float(self.value)


def gh_upper_bound(f: CandidateMap, g: CandidateMap | None = None) -> GHBound:
    """Upper bound on the two-sided GH distance from a pair of candidate maps.

    Without ``g`` an approximate inverse is built; its distortion is at most three
    times that of ``f``, and the report records that relation.
    """
    ef = distortion(f).epsilon
    if g is None:
        g = approximate_inverse(f)
        eg = distortion(g).epsilon
        return GHBound(max(ef, eg), ef, eg, True, 3 * ef, bool(eg <= 3 * ef + 1e-12))
    if g.domain is not f.codomain or g.codomain is not f.domain:
        raise ValueError("g must map the codomain of f back to its domain")
    eg = distortion(g).epsilon
    return GHBound(max(ef, eg), ef, eg, False)


def _best_map(DX: np.ndarray, DY: np.ndarray):
    """Minimal epsilon over all maps X -> Y by depth-first branch and bound."""
    nx, ny = DX.shape[0], DY.shape[0]
    best = [np.inf, None]
    assign = np.zeros(nx, dtype=np.int64)

    def rec(i, cur):
        if cur >= best[0]:
            return
        if i == nx:
            gap = float(DY[:, np.unique(assign)].min(axis=1).max())
            e = max(cur, gap)
            if e < best[0]:
                best[0], best[1] = e, assign.copy()
            return
        for y in range(ny):
            d = np.abs(DX[i, :i] - DY[y, assign[:i]]).max() if i else 0.0
            assign[i] = y
            rec(i + 1, max(cur, float(d)))

    rec(0, 0.0)
    return best[0], best[1]


def gh_bruteforce(X: SampledSpace, Y: SampledSpace, max_nodes: int = 8, return_maps: bool = False):
    """Exact two-sided GH distance of small finite spaces.

    The two directions are independent, so the infimum over pairs is the larger
    of the two one-directional minima.
    """
    if len(X) > max_nodes or len(Y) > max_nodes:
        raise ValueError(f"brute force is limited to {max_nodes} nodes")
    ef, f = _best_map(X.D, Y.D)
    eg, g = _best_map(Y.D, X.D)
    value = max(ef, eg)
    if return_maps:
        return value, CandidateMap(X, Y, f), CandidateMap(Y, X, g)
    return value


def finite_space(D) -> SampledSpace:
    return SampledSpace(np.asarray(D, dtype=float))


def points_on_line(x) -> SampledSpace:
    x = np.asarray(x, dtype=float)
    return finite_space(np.abs(x[:, None] - x[None, :]))


def compose(f: CandidateMap, g: CandidateMap) -> CandidateMap:
    """``g o f``."""
    if f.codomain is not g.domain:
        raise ValueError("maps do not compose")
    return CandidateMap(f.domain, g.codomain, g.mapping[f.mapping])


# --------------------------------------------------------------------------
# uniform convergence (continuity of the metric family)
# --------------------------------------------------------------------------


def _edge_quadrature_points(cloud: PointCloud, edges: np.ndarray, n_sub: int = 9):
    c0, c1, ch = align_charts(cloud.coords[edges[:, 0]], cloud.chart[edges[:, 0]],
                              cloud.coords[edges[:, 1]], cloud.chart[edges[:, 1]])
    pts = np.concatenate([edge_path(c0, c1, s)[0] for s in np.linspace(0.0, 1.0, n_sub)])
    return pts, np.tile(ch, n_sub)


def metric_gap(alpha: MetricModel, beta: MetricModel, coords, chart):
    """Tensor difference and generalized eigenvalue range of ``g_alpha`` vs ``g_beta``."""
    Ga = alpha.chart_gram(coords, chart)
    Gb = beta.chart_gram(coords, chart)
    diff = diff_norm_batch(Ga, Gb)
    L = np.linalg.cholesky(Gb)
    Li = np.linalg.inv(L)
    M = Li @ Ga @ np.swapaxes(Li, -1, -2)
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    return diff, ev[..., 0], ev[..., -1]


@dataclass
class UniformConvergenceReport:
    eps: float
    eps_prime: float
    lambda_min: float
    lambda_max: float
    diam_beta: float
    D_constant: float
    max_abs_diff: float
    pair_witness: tuple
    bound: float
    empirical_constant: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def uniform_convergence_check(X: SampledSpace, alpha: MetricModel, beta: MetricModel | None = None,
                              eps: float | None = None, chunk: int = 4000) -> UniformConvergenceReport:
    """Compare graph distances of two metrics on the same mesh.

    ``X`` must carry the graph built with ``beta``.  The sup of
    ``|g_alpha - g_beta|_{g_beta}`` is taken over nodes and over every quadrature
    node of every edge.  With ``eps' = max(lambda_max - 1, 1 - lambda_min)`` the
    check is ``|d_alpha - d_beta| <= (1 + eps') diam_beta eps``.
    """
    G = X.graph
    if G is None or G.cloud is None:
        raise ValueError("the space must carry its graph and cloud")
    cloud = G.cloud
    beta = metric_model(cloud.model) if beta is None else beta
    v = cloud.vertex
    nodes = np.arange(len(cloud)) if v is None else np.flatnonzero(np.arange(len(cloud)) != v)
    edges = G.edges
    if v is not None:
        edges = edges[(edges[:, 0] != v) & (edges[:, 1] != v)]
    sup, lmin, lmax = 0.0, np.inf, -np.inf
    qp, qc = _edge_quadrature_points(cloud, edges)
    pts = np.concatenate([cloud.coords[nodes], qp])
    chs = np.concatenate([cloud.chart[nodes], qc])
    for s in range(0, pts.shape[0], chunk):
        d, lo, hi = metric_gap(alpha, beta, pts[s : s + chunk], chs[s : s + chunk])
        sup = max(sup, float(d.max()))
        lmin = min(lmin, float(lo.min()))
        lmax = max(lmax, float(hi.max()))
    measured = sup
    eps = measured if eps is None else float(eps)
    eps_prime = max(lmax - 1.0, 1.0 - lmin)
    Ga = build_graph(cloud, G.meta.get("k_neighbors", 12), metric=alpha, edges=G.edges,
                     vertex_proxy=G.meta.get("vertex_proxy") or 1e-4)
    Da = all_pairs_distances(Ga).D
    diff = np.abs(Da - X.D)
    k = int(np.argmax(diff))
    max_diff = float(diff.flat[k])
    n = X.D.shape[0]
    diam = X.diameter
    Dc = (1.0 + eps_prime) * diam
    bound = Dc * eps
    return UniformConvergenceReport(
        eps, eps_prime, lmin, lmax, diam, Dc, max_diff, (k // n, k % n), bound,
        max_diff / eps if eps > 0 else (0.0 if max_diff == 0 else np.inf),
        bool(max_diff <= bound * (1 + 1e-12) + 1e-12),
    )


# --------------------------------------------------------------------------
# matched meshes
# --------------------------------------------------------------------------


@dataclass
class MatchedPair:
    """Model mesh, cone mesh and the candidate map model -> cone (or cone -> model)."""

    source: SampledSpace
    target: SampledSpace
    mapping: np.ndarray
    info: dict = field(default_factory=dict)

    def candidate(self) -> CandidateMap:
        return CandidateMap(self.source, self.target, self.mapping)


def cone_mesh(n: int, k: int = 12, seed: int = 0, R: float = 1.0, n_levels=None):
    cloud = sample_region(Cone(), Region.disc(R), n, seed, layout="rays", n_levels=n_levels)
    G = build_graph(cloud, k)
    return all_pairs_distances(G)


def resolution_matched(a: float, n: int, k: int = 12, seed: int = 0, R: float = 1.0,
                       n_levels=None, cone: SampledSpace | None = None) -> MatchedPair:
    """Tube mesh ``pi^-1`` of the cone ray mesh plus one zero-section node per ray.

    Edges between ray nodes are copied from the cone graph so both meshes measure
    the same segments; zero-section nodes get their own kNN edges.  The candidate
    map is the blowdown, sending zero-section nodes to the vertex.
    """
    cone = cone_mesh(n, k, seed, R, n_levels) if cone is None else cone
    ccloud = cone.cloud
    tube = sample_region(Resolution(a), Region.tube(R), n, seed, layout="rays", n_levels=n_levels)
    n_dirs = int(np.sum(tube.level == 0))
    if not np.allclose(tube.coords[n_dirs:], ccloud.coords[1:], atol=1e-14, rtol=0):
        raise RuntimeError("tube and cone meshes are not matched")
    to_tube = np.concatenate([[-1], np.arange(n_dirs, len(tube))])
    ce = cone.graph.edges
    ce = ce[(ce[:, 0] != ccloud.vertex) & (ce[:, 1] != ccloud.vertex)]
    e_ray = to_tube[ce]
    own = knn_edges(tube.proxy(), k)
    own = own[(own[:, 0] < n_dirs) | (own[:, 1] < n_dirs)]
    edges = _canonical_edges(np.concatenate([e_ray, own, ray_chain_edges(tube)]))
    G = build_graph(tube, k, edges=edges)
    S = all_pairs_distances(G)
    mapping = np.concatenate([np.full(n_dirs, ccloud.vertex), np.arange(1, len(ccloud))])
    return MatchedPair(S, cone, mapping, {"a": a, "n_dirs": n_dirs, "n_tube": len(tube),
                                          "n_cone": len(ccloud)})


def smoothing_matched(t: complex, n: int, k: int = 12, seed: int = 0, R: float = 1.0,
                      n_levels=None, cone: SampledSpace | None = None) -> MatchedPair:
    """Mesh of ``D_t(beta_{t,R})`` from the cone ray mesh through ``phi_t``.

    Cone nodes with ``r >= (|t|/2)^(1/3)`` are pushed forward; each ray also gets
    a node at the fold radius, which ``phi_t`` sends onto the vanishing cycle.
    Cone nodes inside the fold radius (and the vertex) map to that ring node.
    The candidate map goes from the cone to the smoothing.
    """
    cone = cone_mesh(n, k, seed, R, n_levels) if cone is None else cone
    cc = cone.cloud
    r0 = critical_radius(t)
    r = cc.radii
    nv = np.flatnonzero(np.arange(len(cc)) != cc.vertex)
    outer = nv[r[nv] >= r0]
    rays = np.unique(cc.ray[nv])
    # ring direction per ray from its outermost node
    dirs = np.empty((rays.size, 4), dtype=complex)
    for q in rays:
        m = nv[cc.ray[nv] == q]
        j = m[np.argmax(r[m])]
        dirs[q] = cc.points[j] / r[j] ** 1.5
    # the image of a fold-radius point depends only on Re(e^{-i arg(t)/2} z); pick the
    # preimage (x, Jx) with J a complex structure on R^4 so nearby images have
    # nearby preimages
    rot = np.exp(0.5j * np.angle(t))
    x = np.real(dirs / rot) * np.sqrt(2.0)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    Jx = np.stack([-x[:, 1], x[:, 0], -x[:, 3], x[:, 2]], -1)
    ring0 = rot * link_point(x, Jx) * r0**1.5
    z0 = np.concatenate([ring0, cc.points[outer]])
    coords, chart = blowdown_inverse(z0)
    z = phi_t(z0, t)
    ray = np.concatenate([rays, cc.ray[outer]])
    level = np.concatenate([np.zeros(rays.size, int), cc.level[outer]])
    scloud = PointCloud(Smoothing(t), coords, chart, z, cc.seed, None, ray, level)
    n_ring = rays.size
    to_sm = np.full(len(cc), -1)
    to_sm[outer] = n_ring + np.arange(outer.size)
    ce = cone.graph.edges
    keep = (to_sm[ce[:, 0]] >= 0) & (to_sm[ce[:, 1]] >= 0)
    e_ray = to_sm[ce[keep]]
    own = knn_edges(scloud.proxy(), k)
    own = own[(own[:, 0] < n_ring) | (own[:, 1] < n_ring)]
    edges = _canonical_edges(np.concatenate([e_ray, own, ray_chain_edges(scloud)]))
    G = build_graph(scloud, k, edges=edges)
    S = all_pairs_distances(G)
    mapping = to_sm.copy()
    inner = nv[r[nv] < r0]
    mapping[inner] = cc.ray[inner]
    mapping[cc.vertex] = 0
    return MatchedPair(cone, S, mapping, {"t": complex(t), "r0": r0, "n_ring": n_ring,
                                          "n_smoothing": len(scloud), "n_cone": len(cc),
                                          "n_inner": int(inner.size)})


# --------------------------------------------------------------------------
# main lemma audit
# --------------------------------------------------------------------------


@dataclass
class AuditRecord:
    alpha: float
    diam0_G: list
    diam_alpha_preimage: list
    sup_complement: float
    flags: dict
    map_epsilon: float
    bound: float
    conclusion_holds: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MainLemmaAudit:
    eps: float
    k: int
    records: list

    @property
    def passed(self) -> bool:
        return all(all(r.flags.values()) and r.conclusion_holds for r in self.records)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "k": self.k, "records": [r.to_dict() for r in self.records],
                "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=str)


def main_lemma_audit(family: list, G_sets: list, eps: float, sup_complement=None,
                     singular_sets=None) -> MainLemmaAudit:
    """Audit the four hypotheses and the conclusion on a family of matched meshes.

    Parameters
    ----------
    family
        ``(alpha, MatchedPair)`` with the map ``F_alpha`` from the model mesh to the
        cone mesh.
    G_sets
        Node subsets of the cone mesh (the open sets ``G_i``).
    eps
        Tolerance.
    sup_complement
        Callable ``(alpha, pair, complement_nodes) -> float`` measuring
        ``|(F^-1)^* g_alpha - g_0|_{g_0}``; defaults to the resolution decay norm.
    singular_sets
        Cone nodes forming each ``K_i``; defaults to the image of the nodes that
        ``F`` collapses (nodes sharing an image).
    """
    k = len(G_sets)
    records = []
    for alpha, pair in family:
        cone = pair.target
        F = pair.mapping
        n0 = len(cone)
        G_idx = [np.unique(np.asarray(g, dtype=np.int64)) for g in G_sets]
        seen = np.zeros(n0, dtype=bool)
        for g in G_idx:
            if np.any(seen[g]):
                raise ValueError("sets G_i are not disjoint")
            seen[g] = True
        pre = [np.flatnonzero(np.isin(F, g)) for g in G_idx]
        off = np.flatnonzero(~seen[F])
        if np.unique(F[off]).size != off.size:
            raise ValueError("F is not injective off the bad sets")
        if singular_sets is None:
            vals, counts = np.unique(F, return_counts=True)
            K = vals[counts > 1]
            Ks = [K[np.isin(K, g)] for g in G_idx]
        else:
            Ks = [np.asarray(s) for s in singular_sets]
        flag_i = all(np.all(np.isin(Ki, g)) for Ki, g in zip(Ks, G_idx))
        diam0 = [intrinsic_diameter(cone.graph, g) for g in G_idx]
        diama = [intrinsic_diameter(pair.source.graph, p) for p in pre]
        comp = np.flatnonzero(~seen)
        if sup_complement is None:
            sup = resolution_complement_sup(alpha, cone, comp)
        else:
            sup = float(sup_complement(alpha, pair, comp))
        flags = {
            "i_singular_in_G": bool(flag_i),
            "ii_uniform_on_complement": bool(sup <= eps),
            "iii_diam0_G": bool(max(diam0) < eps),
            "iv_diam_alpha_preimage": bool(max(diama) < eps),
        }
        rep = distortion(pair.candidate())
        bound = (2 * k + 1) * eps
        concl = bool(rep.epsilon <= bound) if all(flags.values()) else None
        records.append(AuditRecord(float(np.real(alpha)), diam0, diama, sup, flags,
                                   rep.epsilon, bound, concl))
    return MainLemmaAudit(eps, k, records)


def resolution_complement_sup(a: float, cone: SampledSpace, nodes) -> float:
    from .cdlo_metrics import resolution_cone_difference

    cc = cone.cloud
    nodes = np.asarray(nodes)
    if cc.vertex is not None:
        nodes = nodes[nodes != cc.vertex]
    if nodes.size == 0:
        return 0.0
    return float(resolution_cone_difference(cc.coords[nodes], cc.chart[nodes], a).max())


def disc_nodes(space: SampledSpace, delta: float) -> np.ndarray:
    """Nodes of a cone mesh with ``r <= delta`` (the vertex included)."""
    r = space.cloud.radii
    return np.flatnonzero(r <= delta)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def report_json(obj) -> str:
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(obj, indent=2, sort_keys=True, default=str)
