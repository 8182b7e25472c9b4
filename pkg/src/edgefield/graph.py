"""Areal adjacency graphs, incidence matrices, and line-graph structure.

The region graph G = (V, E) is the input object; every precision kernel in
the package is built either on G itself (node-level CAR smoothing) or on its
line graph L(G), whose nodes are the edges of G. Edges are kept in a single
canonical order (lexicographic on normalized (u, v) pairs with u < v) so that
incidence columns, line-graph rows, skewness indices, and all file outputs
are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ArealGraph",
    "IncidenceMatrix",
    "LineGraphStructure",
    "SpectralCache",
    "load_edge_list",
    "build_incidence",
    "build_line_graph",
    "spectral_decompose",
    "precision_quadratic",
    "graph_summary",
]

# eigenvalues this close to +/-1 are clamped to keep log(1 - g*lam) defined
# for dependence parameters near the interval boundary
_EIG_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class SpectralCache:
    """Eigenvalues of D^{-1/2} W D^{-1/2} and the induced validity interval.

    ``lambdas`` are sorted ascending. The dependence parameter of a kernel
    D - g*W is valid (kernel SPD) exactly for g in the open interval
    ``bounds`` = (1/lambda_min, 1/lambda_max), with -inf when no negative
    eigenvalue exists.
    """

    lambdas: np.ndarray
    bounds: tuple[float, float]

    def contains(self, g: float) -> bool:
        lo, hi = self.bounds
        return lo < g < hi


@dataclass(frozen=True)
class ArealGraph:
    """Region adjacency graph with canonical edge ordering."""

    n: int
    edges: tuple[tuple[int, int], ...]
    node_degrees: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class IncidenceMatrix:
    """Node-edge incidence: C[i, e] = 1 iff region i is an endpoint of e."""

    C: sp.csr_matrix = field(repr=False)

    @property
    def dense(self) -> np.ndarray:
        return self.C.toarray()


@dataclass(frozen=True)
class LineGraphStructure:
    """Adjacency/degree matrices of L(G) plus the spectral cache of (M_e, A_e)."""

    p: int
    A_e: np.ndarray = field(repr=False)
    M_e: np.ndarray = field(repr=False)
    spectral: SpectralCache = field(repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diag(self.M_e)


def _canonical_graph(n: int, edge_set: set[tuple[int, int]]) -> ArealGraph:
    edges = tuple(sorted(edge_set))
    degrees = np.zeros(n, dtype=np.int64)
    A = np.zeros((n, n), dtype=np.float64)
    for u, v in edges:
        degrees[u] += 1
        degrees[v] += 1
        A[u, v] = 1.0
        A[v, u] = 1.0
    return ArealGraph(n=n, edges=edges, node_degrees=degrees, A=A, M=np.diag(degrees.astype(np.float64)))


def from_edge_pairs(pairs, n: int | None = None) -> ArealGraph:
    """Build a canonical ArealGraph from (u, v) integer pairs.

    Pairs are normalized to u < v and deduplicated; self-loops are rejected.
    """
    edge_set: set[tuple[int, int]] = set()
    max_id = -1
    for u, v in pairs:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"self-loop ({u},{v}) is not allowed")
        if u < 0 or v < 0:
            raise ValueError(f"negative region id in edge ({u},{v})")
        if u > v:
            u, v = v, u
        edge_set.add((u, v))
        max_id = max(max_id, v)
    if not edge_set:
        raise ValueError("empty edge set")
    n_eff = 1 + max_id if n is None else n
    if n is not None and max_id >= n:
        raise ValueError(f"edge references region {max_id} but n={n}")
    return _canonical_graph(n_eff, edge_set)


def load_edge_list(path) -> ArealGraph:
    """Read an edge-list CSV (header ``src,dst``) into a canonical ArealGraph."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["src", "dst"]:
            raise ValueError(f"{path}: expected header 'src,dst'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            try:
                u, v = int(row[0]), int(row[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer token") from exc
            pairs.append((u, v))
    return from_edge_pairs(pairs)


def build_incidence(g: ArealGraph) -> IncidenceMatrix:
    """Sparse n x p incidence matrix of g, columns in canonical edge order."""
    p = g.p
    rows = np.empty(2 * p, dtype=np.int64)
    cols = np.empty(2 * p, dtype=np.int64)
    for e, (u, v) in enumerate(g.edges):
        rows[2 * e] = u
        rows[2 * e + 1] = v
        cols[2 * e] = e
        cols[2 * e + 1] = e
    data = np.ones(2 * p)
    C = sp.csr_matrix((data, (rows, cols)), shape=(g.n, p))
    return IncidenceMatrix(C=C)


def build_line_graph(g: ArealGraph) -> LineGraphStructure:
    """Adjacency and degree matrices of L(G), with the spectral cache.

    Two edges of G are adjacent in L(G) iff they share an endpoint. An
    isolated edge (both endpoints of degree 1) would have line-graph degree
    zero, making M_e singular; such inputs are rejected.
    """
    p = g.p
    deg = g.node_degrees
    lg_deg = np.array([deg[u] + deg[v] - 2 for u, v in g.edges], dtype=np.float64)
    if np.any(lg_deg == 0):
        bad = [g.edges[e] for e in np.nonzero(lg_deg == 0)[0]]
        raise ValueError(f"isolated edge(s) {bad}: line-graph degree zero")

    # group edge ids by endpoint; edges sharing a node form a clique in L(G)
    incident: list[list[int]] = [[] for _ in range(g.n)]
    for e, (u, v) in enumerate(g.edges):
        incident[u].append(e)
        incident[v].append(e)
    A_e = np.zeros((p, p))
    for ids in incident:
        for i, e in enumerate(ids):
            for f in ids[i + 1:]:
                A_e[e, f] = 1.0
                A_e[f, e] = 1.0
    M_e = np.diag(lg_deg)
    spec = spectral_decompose(M_e, A_e)
    return LineGraphStructure(p=p, A_e=A_e, M_e=M_e, spectral=spec)


def spectral_decompose(D: np.ndarray, W: np.ndarray) -> SpectralCache:
    """Eigenvalues of D^{-1/2} W D^{-1/2} and validity interval for D - g*W."""
    d = np.diag(D).astype(np.float64)
    if np.any(d <= 0):
        raise ValueError("degree matrix has a nonpositive diagonal entry")
    s = 1.0 / np.sqrt(d)
    lam = np.linalg.eigvalsh(s[:, None] * W * s[None, :])
    lam = np.sort(lam)
    lam = np.clip(lam, -1.0 - _EIG_CLAMP_TOL, 1.0 + _EIG_CLAMP_TOL)
    lam[np.abs(lam - 1.0) < _EIG_CLAMP_TOL] = 1.0
    lam[np.abs(lam + 1.0) < _EIG_CLAMP_TOL] = -1.0
    lo = 1.0 / lam[0] if lam[0] < 0 else -np.inf
    hi = 1.0 / lam[-1] if lam[-1] > 0 else np.inf
    return SpectralCache(lambdas=lam, bounds=(lo, hi))


def log_det_kernel(D: np.ndarray, cache: SpectralCache, g: float) -> float:
    """log det(D - g*W) via the eigenvalues of the normalized adjacency."""
    if not cache.contains(g):
        raise ValueError(f"dependence parameter {g} outside validity interval {cache.bounds}")
    return float(np.sum(np.log(np.diag(D))) + np.sum(np.log1p(-g * cache.lambdas)))


def precision_quadratic(lg: LineGraphStructure, gamma: float, x: np.ndarray) -> float:
    """Evaluate x' (M_e - gamma A_e) x for gamma inside the validity interval."""
    if not lg.spectral.contains(gamma):
        raise ValueError(f"gamma={gamma} outside validity interval {lg.spectral.bounds}")
    x = np.asarray(x, dtype=np.float64)
    return float(x @ (np.diag(lg.M_e) * x) - gamma * (x @ (lg.A_e @ x)))


def graph_summary(g: ArealGraph, lg: LineGraphStructure | None = None) -> str:
    """Structured text report: n, p, degree histogram, validity interval."""
    lines = [
        "areal graph summary",
        f"  regions (n): {g.n}",
        f"  edges (p):   {g.p}",
    ]
    vals, counts = np.unique(g.node_degrees, return_counts=True)
    lines.append("  degree histogram:")
    for d, c in zip(vals, counts):
        lines.append(f"    degree {d}: {c}")
    if lg is not None:
        lo, hi = lg.spectral.bounds
        lines.append(f"  line-graph validity interval: ({lo:.6g}, {hi:.6g})")
    return "\n".join(lines) + "\n"
