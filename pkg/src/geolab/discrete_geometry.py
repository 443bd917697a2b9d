"""Weighted geodesic graphs on sampled local models.

A cloud becomes a graph by joining each node to its ``k`` nearest neighbours in a
proxy coordinate system and weighting every edge by the metric length of the
straight chart-coordinate segment between its endpoints.  Shortest paths in the
graph then approximate the length metric.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .cdlo_metrics import MetricModel, metric_model, segment_lengths
from .local_models import (
    Cone,
    GeometryError,
    PointCloud,
    Region,
    RegionKind,
    Resolution,
    chart_radius,
    sample_tube_chart,
)


class DisconnectedGraphError(GeometryError):
    pass


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------


@dataclass
class GeodesicGraph:
    """Undirected weighted graph over a point cloud.

    ``edges`` is an ``(m, 2)`` array with ``i < j``; ``weights`` the matching lengths.
    """

    cloud: PointCloud | None
    n: int
    edges: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.edges.shape[0] != self.weights.shape[0]:
            raise ValueError("one weight per edge")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("edge weights must be positive and finite")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self loops are not allowed")
        self._csr = None

    @property
    def csr(self) -> sparse.csr_matrix:
        if self._csr is None:
            i, j = self.edges.T
            w = self.weights
            m = sparse.coo_matrix(
                (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                shape=(self.n, self.n),
            )
            self._csr = m.tocsr()
        return self._csr

    def weight(self, i: int, j: int) -> float:
        w = self.csr[i, j]
        if w == 0:
            raise KeyError(f"no edge ({i}, {j})")
        return float(w)

    def neighbors(self, i: int) -> np.ndarray:
        row = self.csr.getrow(i)
        return row.indices

    def n_components(self, subset=None) -> int:
        m = self.csr if subset is None else self.induced(subset)
        return csgraph.connected_components(m, directed=False)[0]

    def is_connected(self, subset=None) -> bool:
        return self.n_components(subset) == 1

    def induced(self, subset) -> sparse.csr_matrix:
        idx = _as_index(subset, self.n)
        return self.csr[idx][:, idx]

    def path_length(self, path) -> float:
        path = np.asarray(path, dtype=np.int64)
        if path.size < 2:
            return 0.0
        w = np.asarray(self.csr[path[:-1], path[1:]]).ravel()
        if np.any(w == 0):
            raise ValueError("path uses a non-edge")
        return float(w.sum())

    def to_files(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "edges.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "w"])
            for (i, j), wt in zip(self.edges, self.weights):
                w.writerow([int(i), int(j), repr(float(wt))])


@dataclass
class SampledSpace:
    """A finite metric space: nodes with a symmetric distance matrix."""

    D: np.ndarray
    cloud: PointCloud | None = None
    provenance: dict = field(default_factory=dict)
    graph: GeodesicGraph | None = None

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=float)
        if self.D.ndim != 2 or self.D.shape[0] != self.D.shape[1]:
            raise ValueError("distance matrix must be square")

    def __len__(self) -> int:
        return self.D.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.D.max()) if len(self) else 0.0

    def check_axioms(self, slack: float = 1e-9, max_nodes: int = 600, seed: int = 0) -> dict:
        """Identity, symmetry and triangle inequality (on a node subsample when large)."""
        D = self.D
        ident = float(np.abs(np.diag(D)).max()) if len(self) else 0.0
        sym = float(np.abs(D - D.T).max()) if len(self) else 0.0
        n = len(self)
        idx = np.arange(n)
        if n > max_nodes:
            idx = np.sort(np.random.default_rng(seed).choice(n, max_nodes, replace=False))
        S = D[np.ix_(idx, idx)]
        worst = 0.0
        for k in range(S.shape[0]):
            worst = max(worst, float((S - (S[:, k, None] + S[None, k, :])).max()))
        return {
            "identity": ident,
            "symmetry": sym,
            "triangle_excess": worst,
            "ok": ident == 0 and sym == 0 and worst <= slack,
        }

    def to_files(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "dist.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in self.D[i, : i + 1]])
        meta = dict(self.provenance)
        meta["n"] = len(self)
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
        if self.graph is not None:
            self.graph.to_files(d)


def read_space(directory) -> SampledSpace:
    d = Path(directory)
    rows = [list(map(float, r)) for r in csv.reader(open(d / "dist.csv"))]
    n = len(rows)
    D = np.zeros((n, n))
    for i, r in enumerate(rows):
        D[i, : i + 1] = r
    D = D + np.tril(D, -1).T
    meta = json.loads((d / "meta.json").read_text())
    return SampledSpace(D, provenance=meta)


@dataclass
class BadSetFamily:
    """Pairwise disjoint node sets, each connected within the graph."""

    sets: list

    def __post_init__(self):
        self.sets = [np.unique(np.asarray(q, dtype=np.int64)) for q in self.sets]

    def validate(self, G: GeodesicGraph) -> None:
        seen = np.zeros(G.n, dtype=bool)
        for q in self.sets:
            if q.size == 0:
                raise ValueError("bad sets must be nonempty")
            if np.any(seen[q]):
                raise ValueError("bad sets are not disjoint")
            seen[q] = True
            if not G.is_connected(q):
                raise ValueError("bad set is not connected in the graph")

    def labels(self, n: int) -> np.ndarray:
        lab = np.full(n, -1, dtype=np.int64)
        for k, q in enumerate(self.sets):
            lab[q] = k
        return lab

    def __len__(self) -> int:
        return len(self.sets)


def _as_index(subset, n) -> np.ndarray:
    idx = np.asarray(subset)
    if idx.dtype == bool:
        if idx.shape != (n,):
            raise ValueError("boolean subset must match the node count")
        idx = np.flatnonzero(idx)
    return np.unique(idx.astype(np.int64))


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------


def knn_edges(proxy: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Symmetrized ``k``-nearest-neighbour edge list ``(i < j)`` in proxy space."""
    n = proxy.shape[0]
    keep = np.ones(n, dtype=bool)
    if exclude is not None:
        keep[np.asarray(exclude)] = False
    ids = np.flatnonzero(keep)
    kk = min(k, ids.size - 1)
    if kk < 1:
        return np.zeros((0, 2), dtype=np.int64)
    tree = cKDTree(proxy[ids])
    _, nb = tree.query(proxy[ids], kk + 1)
    src = np.repeat(ids, kk)
    dst = ids[nb[:, 1:].ravel()]
    return _canonical_edges(np.stack([src, dst], -1))


def ray_chain_edges(cloud: PointCloud) -> np.ndarray:
    """Edges between consecutive nodes of each ray (the vertex excluded)."""
    ray = np.asarray(cloud.ray)
    order = np.lexsort((cloud.radii, cloud.level, ray))
    order = order[ray[order] >= 0]
    if cloud.vertex is not None:
        order = order[order != cloud.vertex]
    same = ray[order[1:]] == ray[order[:-1]]
    return _canonical_edges(np.stack([order[:-1][same], order[1:][same]], -1))


def _canonical_edges(e: np.ndarray) -> np.ndarray:
    e = np.sort(np.asarray(e, dtype=np.int64).reshape(-1, 2), axis=1)
    e = e[e[:, 0] != e[:, 1]]
    return np.unique(e, axis=0)


def _to_chart_unchecked(c, h, target):
    # lam = 0 maps to infinity; callers discard such representations
    out = c.copy()
    swap = h != target
    lam = c[swap, 0]
    with np.errstate(all="ignore"):
        out[swap, 0] = 1.0 / lam
    out[swap, 1] = lam * c[swap, 1]
    out[swap, 2] = lam * c[swap, 2]
    return out


def align_charts(ci, hi, cj, hj):
    """Express both endpoints of each edge in one chart (the one with smaller ``|lam|``)."""
    ci = np.asarray(ci, dtype=complex)
    cj = np.asarray(cj, dtype=complex)
    hi = np.asarray(hi, dtype=np.int8)
    hj = np.asarray(hj, dtype=np.int8)
    same = hi == hj
    cj_in_i = _to_chart_unchecked(cj, hj, hi)
    ci_in_j = _to_chart_unchecked(ci, hi, hj)
    m_i = np.maximum(abs(ci[:, 0]), abs(cj_in_i[:, 0]))
    m_j = np.maximum(abs(ci_in_j[:, 0]), abs(cj[:, 0]))
    m_i = np.where(np.isfinite(m_i), m_i, np.inf)
    m_j = np.where(np.isfinite(m_j), m_j, np.inf)
    use_i = same | (m_i <= m_j)
    c0 = np.where(use_i[:, None], ci, ci_in_j)
    c1 = np.where(use_i[:, None], cj_in_i, cj)
    chart = np.where(use_i, hi, hj)
    return c0, c1, chart


def edge_weights(cloud: PointCloud, edges: np.ndarray, metric: MetricModel,
                 rtol: float = 1e-4, chunk: int = 20000) -> np.ndarray:
    """Metric lengths of the chart segments for ``edges`` (NaN where undefined)."""
    out = np.empty(edges.shape[0])
    for s in range(0, edges.shape[0], chunk):
        e = edges[s : s + chunk]
        c0, c1, ch = align_charts(cloud.coords[e[:, 0]], cloud.chart[e[:, 0]],
                                  cloud.coords[e[:, 1]], cloud.chart[e[:, 1]])
        with np.errstate(all="ignore"):
            out[s : s + chunk] = segment_lengths(metric, c0, c1, ch, rtol)
    return out


def vertex_edges(cloud: PointCloud, k: int, proxy_fraction: float = 1e-4):
    """Radial edges from the cone vertex node.

    The vertex is modelled by a proxy at radius ``proxy_fraction * outer radius``;
    the radial segment from the proxy to a node at radius ``r`` has length
    ``r - r_proxy`` exactly.  The vertex joins the innermost node of every ray and
    its ``k`` nearest nodes by radius.
    """
    v = cloud.vertex
    r = cloud.radii.copy()
    r_proxy = proxy_fraction * r.max()
    others = np.flatnonzero(np.arange(len(cloud)) != v)
    targets = set(others[np.argsort(r[others], kind="stable")[:k]].tolist())
    if cloud.ray is not None:
        rays = cloud.ray[others]
        for q in np.unique(rays[rays >= 0]):
            members = others[rays == q]
            targets.add(int(members[np.argmin(r[members])]))
    t = np.array(sorted(targets), dtype=np.int64)
    e = _canonical_edges(np.stack([np.full(t.size, v), t], -1))
    other = np.where(e[:, 0] == v, e[:, 1], e[:, 0])
    return e, np.maximum(r[other] - r_proxy, 1e-300)


def build_graph(cloud: PointCloud, k_neighbors: int = 12, metric: MetricModel | None = None,
                edges=None, proxy=None, vertex_proxy: float = 1e-4, rtol: float = 1e-4,
                require_connected: bool = True) -> GeodesicGraph:
    """Weighted kNN graph on a cloud.

    Parameters
    ----------
    cloud
        Nodes; chart coordinates parametrize every non-vertex node.
    k_neighbors
        Neighbours per node in the proxy space (at least 6).
    metric
        Speed evaluator; defaults to the model's own metric.
    edges
        Optional fixed edge list, used instead of the kNN search (for pushforward
        and matched meshes).
    proxy
        Optional proxy coordinates; defaults to ``cloud.proxy()``.

    Raises
    ------
    DisconnectedGraphError
        If the retained edges do not connect all nodes.
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("empty cloud")
    if edges is None and k_neighbors < 6:
        raise ValueError("k_neighbors must be at least 6")
    metric = metric_model(cloud.model) if metric is None else metric
    v = cloud.vertex
    w_extra = np.zeros(0)
    e_extra = np.zeros((0, 2), dtype=np.int64)
    if edges is None:
        if n == 1:
            return GeodesicGraph(cloud, 1, np.zeros((0, 2)), np.zeros(0))
        P = cloud.proxy() if proxy is None else np.asarray(proxy, dtype=float)
        e = knn_edges(P, k_neighbors, exclude=None if v is None else [v])
        if cloud.ray is not None:
            e = _canonical_edges(np.concatenate([e, ray_chain_edges(cloud)]))
        if v is not None:
            e_extra, w_extra = vertex_edges(cloud, k_neighbors, vertex_proxy)
    else:
        e = _canonical_edges(edges)
        if v is not None:
            touching = (e[:, 0] == v) | (e[:, 1] == v)
            e_v = e[touching]
            e = e[~touching]
            if e_v.size:
                r = cloud.radii
                other = np.where(e_v[:, 0] == v, e_v[:, 1], e_v[:, 0])
                e_extra, w_extra = e_v, r[other] - vertex_proxy * r.max()
    if e.shape[0] == 0 and e_extra.shape[0] == 0:
        raise DisconnectedGraphError("no edges")
    w = edge_weights(cloud, e, metric, rtol)
    good = np.isfinite(w) & (w > 0)
    edges_all = np.concatenate([e[good], e_extra])
    weights_all = np.concatenate([w[good], w_extra])
    G = GeodesicGraph(cloud, n, edges_all, weights_all,
                      {"k_neighbors": k_neighbors, "dropped_edges": int((~good).sum()),
                       "vertex_proxy": vertex_proxy if v is not None else None})
    if require_connected and not G.is_connected():
        raise DisconnectedGraphError(f"graph has {G.n_components()} components")
    return G


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------


def all_pairs_distances(G: GeodesicGraph) -> SampledSpace:
    if G.n > 1 and not G.is_connected():
        raise DisconnectedGraphError("distances need a connected graph")
    D = csgraph.dijkstra(G.csr, directed=False)
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    prov = {"n_edges": int(G.edges.shape[0])}
    if G.cloud is not None:
        prov.update(model=G.cloud.model.name, param=str(G.cloud.model.param),
                    seed=G.cloud.seed, fill_distance=G.cloud.fill_distance)
    prov.update(G.meta)
    return SampledSpace(D, G.cloud, prov, G)


def intrinsic_distances(G: GeodesicGraph, subset) -> np.ndarray:
    """Shortest-path distances within the induced subgraph on ``subset``."""
    idx = _as_index(subset, G.n)
    D = csgraph.dijkstra(G.induced(idx), directed=False)
    return np.minimum(D, D.T)


def intrinsic_diameter(S, subset=None, chunk: int = 256) -> float:
    """Largest intrinsic distance between nodes of ``subset``.

    Paths are confined to the induced subgraph.  ``S`` may be a
    :class:`SampledSpace` (whole-space diameters read off the matrix) or a
    :class:`GeodesicGraph`.
    """
    if isinstance(S, SampledSpace):
        if subset is None:
            return S.diameter
        if S.graph is None:
            raise ValueError("intrinsic diameters of subsets need the graph")
        S = S.graph
    G = S
    idx = np.arange(G.n) if subset is None else _as_index(subset, G.n)
    if idx.size <= 1:
        return 0.0
    M = G.induced(idx)
    best = 0.0
    for s in range(0, idx.size, chunk):
        D = csgraph.dijkstra(M, directed=False, indices=np.arange(s, min(s + chunk, idx.size)))
        if not np.all(np.isfinite(D)):
            raise DisconnectedGraphError("subset is not connected within itself")
        best = max(best, float(D.max()))
    return best


def shortest_path(G: GeodesicGraph, i: int, j: int, subset=None) -> list[int]:
    """Node path of a shortest path from ``i`` to ``j`` (optionally inside ``subset``)."""
    if subset is None:
        idx = np.arange(G.n)
        M = G.csr
    else:
        idx = _as_index(subset, G.n)
        M = G.induced(idx)
    pos = {int(v): k for k, v in enumerate(idx)}
    if i not in pos or j not in pos:
        raise ValueError("endpoints must lie in the subset")
    _, pred = csgraph.dijkstra(M, directed=False, indices=pos[i], return_predecessors=True)
    k = pos[j]
    out = [k]
    while k != pos[i]:
        k = pred[k]
        if k < 0:
            raise DisconnectedGraphError("no path inside the subset")
        out.append(k)
    return [int(idx[q]) for q in reversed(out)]


# --------------------------------------------------------------------------
# curve reduction
# --------------------------------------------------------------------------


def visit_intervals(path, labels: np.ndarray, k: int) -> int:
    """Number of maximal runs of ``path`` inside set ``k``."""
    inside = labels[np.asarray(path)] == k
    return int(np.sum(inside[1:] & ~inside[:-1]) + (1 if inside.size and inside[0] else 0))


def reduce_curve(G: GeodesicGraph, path, Q: BadSetFamily, validate: bool = True) -> list[int]:
    """Reroute a walk so it meets each bad set in at most one interval.

    For each set in turn the walk between its first entry and last exit is replaced
    by an intrinsic shortest path inside the set.  The replaced stretch contains
    any earlier set's interval entirely or not at all, so earlier sets keep at
    most one interval.
    """
    path = [int(p) for p in path]
    if len(path) == 0:
        raise ValueError("empty path")
    if validate:
        Q.validate(G)
        G.path_length(path)
    labels = Q.labels(G.n)
    for k, q in enumerate(Q.sets):
        hits = [i for i, p in enumerate(path) if labels[p] == k]
        if len(hits) == 0:
            continue
        first, last = hits[0], hits[-1]
        inner = shortest_path(G, path[first], path[last], subset=q)
        path = path[:first] + inner + path[last + 1 :]
    return path


# --------------------------------------------------------------------------
# volume
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeEstimate:
    estimate: float
    std_error: float
    n: int

    def __iter__(self):
        return iter((self.estimate, self.std_error))


def monte_carlo_volume(model, region: Region, metric: MetricModel | None = None, n: int = 100000,
                       seed: int = 0, indicator=None) -> VolumeEstimate:
    """Importance-sampled Riemannian volume of a region.

    Points are drawn in chart ``U`` (``lam`` uniform on the Riemann sphere, fibre
    direction uniform, radius density ``~ r^5`` mixed with a uniform component
    below the resolution scale) and the chart volume density is divided by the
    sampler density.  For the cone the chart parametrizes V_0 through the
    blowdown.  ``indicator`` optionally restricts the region further.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    metric = metric_model(model) if metric is None else metric
    if isinstance(model, Resolution):
        if region.kind != RegionKind.Tube:
            raise GeometryError("the resolution is measured on tubes")
        a_mix = model.a
    elif isinstance(model, Cone) or model is None:
        # the pure r^5 sampler matches the cone density exactly; mixing in a
        # uniform radial component keeps the estimator a genuine Monte Carlo one
        a_mix = region.outer_radius
    else:
        raise GeometryError("volumes are computed on the resolution and the cone")
    rng = np.random.default_rng(seed)
    coords, dens = sample_tube_chart(n, region.outer_radius, rng, a_mix)
    chart = np.zeros(n, dtype=np.int8)
    keep = chart_radius(coords) >= region.inner_radius
    if indicator is not None:
        keep &= np.asarray(indicator(coords), dtype=bool)
    vals = np.zeros(n)
    if np.any(keep):
        vals[keep] = metric.volume_density_chart(coords[keep], chart[keep]) / dens[keep]
    est = float(vals.mean())
    err = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    if not est > 0 or err > est:
        raise ValueError("Monte Carlo estimator variance exceeds the estimate")
    return VolumeEstimate(est, err, n)
