"""Spectral community detection on weighted undirected graphs.

The operator is the weighted normalized Laplacian

    L_ij = delta_ij - w_ij / sqrt(l_i * l_j),    l_i = sum_j w_ij

whose spectrum lies in [0, 2].  Each connected component contributes one
zero eigenvalue with eigenvector proportional to ``sqrt(l)`` on that
component.  Communities show up as a group of small nonzero eigenvalues
split from the bulk by a gap, and as branches in the scatter plot of the
matching eigenvectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .bigraph import read_triplets, write_triplets
from .errors import BlogspaceError, ConvergenceError, EmptyDataError

ZERO_TOL = 1e-9
GAP_EPS = 1e-6
# score given to the step out of the zero eigenspace, whose literal relative
# size is unbounded; planted structure scores near 1, noise below 0.15
BOUNDARY_SCORE = 0.5
RING_EPS = 1e-3
DENSE_MAX = 500
RESIDUAL_TOL = 1e-8


@dataclass
class LaplacianMatrix:
    matrix: sp.csr_matrix
    nodes: list[str]
    strengths: np.ndarray
    removed: list[str]

    @property
    def n(self) -> int:
        return len(self.nodes)

    def components(self) -> tuple[int, np.ndarray]:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        return connected_components(off, directed=False)

    def null_vector(self) -> np.ndarray:
        v = np.sqrt(self.strengths)
        return v / np.linalg.norm(v)


def normalized_laplacian(g) -> LaplacianMatrix:
    """Build ``I - D^-1/2 W D^-1/2`` for any graph exposing ``nodes`` and ``adjacency``.

    Zero-strength nodes are dropped and listed in ``removed``.
    """
    adj = sp.csr_matrix(g.adjacency, dtype=float)
    nodes = list(g.nodes)
    if adj.shape[0] == 0:
        raise EmptyDataError("graph has no nodes")
    strengths = np.asarray(adj.sum(axis=1)).ravel()
    keep = strengths > 0
    removed = [n for n, k in zip(nodes, keep) if not k]
    if not keep.any():
        raise EmptyDataError("graph has no edges after removing isolated nodes")
    idx = np.flatnonzero(keep)
    adj = adj[idx][:, idx]
    s = strengths[idx]
    dinv = sp.diags(1.0 / np.sqrt(s))
    lap = (sp.identity(len(idx), format="csr") - dinv @ adj @ dinv).tocsr()
    lap.sort_indices()
    return LaplacianMatrix(lap, [nodes[i] for i in idx], s, removed)


@dataclass
class Spectrum:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # n x k, orthonormal columns
    residuals: np.ndarray
    nodes: list[str]

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def n_zero(self) -> int:
        return int(np.sum(self.values < ZERO_TOL))


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1
    return vecs * signs


def _component_pairs(lap_c: sp.csr_matrix, s_c: np.ndarray, need: int, dense: bool, rng) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``need`` eigenpairs of one connected block; the first is the analytic null pair."""
    m = lap_c.shape[0]
    v0 = np.sqrt(s_c)
    v0 /= np.linalg.norm(v0)
    if need == 1:
        return np.zeros(1), v0[:, None]
    if dense or need >= m - 1 or m <= 20:
        w, v = scipy.linalg.eigh(lap_c.toarray())
        vals = np.concatenate([[0.0], w[1:need]])
        vecs = np.column_stack([v0, v[:, 1:need]])
        return vals, vecs

    # largest eigenvalues of 2I - L with the null direction deflated
    def matvec(x):
        x = np.ravel(x)
        return 2.0 * x - lap_c @ x - 2.0 * v0 * (v0 @ x)

    op = LinearOperator((m, m), matvec=matvec, dtype=float)
    start = rng.standard_normal(m)
    start -= v0 * (v0 @ start)
    nev = need - 1
    ncv = min(m, max(2 * nev + 1, 40))
    try:
        mu, v = eigsh(op, k=nev, which="LA", v0=start, ncv=ncv, tol=1e-13, maxiter=50 * m)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"Lanczos iteration did not converge ({len(exc.eigenvalues)} of {nev} pairs)",
            residuals=None,
        ) from None
    order = np.argsort(-mu)
    vals = np.concatenate([[0.0], 2.0 - mu[order]])
    vecs = np.column_stack([v0, v[:, order]])
    return vals, vecs


def smallest_eigenpairs(
    lap: LaplacianMatrix,
    k: int,
    seed: int = 0,
    method: str = "auto",
    dense_max: int = DENSE_MAX,
    residual_tol: float = RESIDUAL_TOL,
) -> Spectrum:
    """The ``k`` algebraically smallest eigenpairs of ``lap``.

    Each connected component is solved on its own, so the zero eigenvalue
    appears exactly once per component with eigenvector ``sqrt(l)``
    restricted to it.  ``method`` is ``"dense"``, ``"lanczos"`` (implicitly
    restarted Lanczos via ARPACK on the deflated operator ``2I - L``), or
    ``"auto"`` which goes dense for ``n <= dense_max``.  Signs are fixed so
    each vector's largest-magnitude entry is positive.
    """
    n = lap.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if method not in ("auto", "dense", "lanczos"):
        raise ValueError(f"unknown method {method!r}")
    dense = method == "dense" or (method == "auto" and n <= dense_max)
    ncomp, labels = lap.components()
    # components in order of their first node
    first = np.full(ncomp, n)
    np.minimum.at(first, labels, np.arange(n))
    comp_order = np.argsort(first)

    candidates = []
    for rank, c in enumerate(comp_order):
        idx = np.flatnonzero(labels == c)
        need = min(k, idx.size)
        sub = lap.matrix[idx][:, idx].tocsr()
        rng = np.random.default_rng([seed, rank])
        vals, vecs = _component_pairs(sub, lap.strengths[idx], need, dense, rng)
        for j in range(len(vals)):
            candidates.append((float(vals[j]), rank, j, idx, vecs[:, j]))
    candidates.sort(key=lambda t: (t[0], t[1], t[2]))
    chosen = candidates[:k]

    values = np.array([c[0] for c in chosen])
    vectors = np.zeros((n, k))
    for col, (_, _, _, idx, vec) in enumerate(chosen):
        vectors[idx, col] = vec
    vectors = _fix_signs(vectors)
    residuals = np.linalg.norm(lap.matrix @ vectors - vectors * values, axis=0)
    if np.any(residuals > residual_tol):
        raise ConvergenceError(
            f"eigenpair residuals up to {residuals.max():.3g} exceed {residual_tol}", residuals=residuals
        )
    return Spectrum(values, vectors, residuals, list(lap.nodes))


@dataclass
class GapScan:
    k: int
    n_zero: int
    scores: np.ndarray  # score of the gap after position i (1-based k = i + 1)

    @property
    def n_nonzero_below_gap(self) -> int:
        """Separated nonzero eigenvalues, the count read off a ranked spectrum plot."""
        return self.k - self.n_zero


def scan_gaps(
    eigenvalues,
    m_scan: int | None = None,
    zero_tol: float = ZERO_TOL,
    eps_gap: float = GAP_EPS,
    boundary_score: float = BOUNDARY_SCORE,
) -> GapScan:
    """Locate the dominant relative gap among the first ``m_scan`` eigenvalues.

    The gap after position ``i`` scores ``(lam[i+1] - lam[i]) / max(lam[i], eps_gap)``.
    Gaps inside the zero eigenspace are never chosen.  The step from the last
    zero to the first nonzero eigenvalue gets the fixed ``boundary_score``, so
    a connected graph reports k=1 unless some later gap beats it.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if m_scan is not None:
        if m_scan > lam.size:
            raise ValueError(f"m_scan={m_scan} exceeds the {lam.size} eigenvalues supplied")
        lam = lam[:m_scan]
    if lam.size < 3:
        raise ValueError("need at least three eigenvalues to locate a gap")
    if lam.max() - lam.min() < zero_tol:
        raise BlogspaceError("no gap: all eigenvalues are equal")
    n_zero = int(np.sum(lam < zero_tol))
    scores = np.full(lam.size - 1, -np.inf)
    for i in range(lam.size - 1):
        if i + 1 < n_zero:
            continue
        if i + 1 == n_zero:
            scores[i] = boundary_score
        else:
            scores[i] = (lam[i + 1] - lam[i]) / max(lam[i], eps_gap)
    return GapScan(int(np.argmax(scores)) + 1, n_zero, scores)


def detect_num_communities(eigenvalues, m_scan: int | None = None, boundary_score: float = BOUNDARY_SCORE) -> int:
    return scan_gaps(eigenvalues, m_scan, boundary_score=boundary_score).k


@dataclass
class CommunityAssignment:
    nodes: list[str]
    labels: np.ndarray  # 1..k, 0 marks the unclassified central ring
    k: int
    row_norms: np.ndarray

    def sizes(self) -> dict[int, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in range(1, self.k + 1)}

    @property
    def n_unclassified(self) -> int:
        return int(np.sum(self.labels == 0))

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.nodes, (int(x) for x in self.labels)))


def _embedding_columns(spec: Spectrum, k: int) -> list[int]:
    # connected: skip the trivial vector; disconnected: the zero eigenspace
    # vectors are component indicators and carry the split themselves
    return list(range(1, k)) if spec.n_zero <= 1 else list(range(k))


def spherical_kmeans(y: np.ndarray, k: int, max_iter: int = 300) -> np.ndarray:
    """Cluster unit rows by cosine similarity with farthest-point seeding.

    The first centre is row 0; the rest are picked greedily as the row least
    similar to all centres chosen so far.  No randomness is involved.
    """
    centers = [y[0]]
    sim = y @ y[0]
    for _ in range(1, k):
        nxt = int(np.argmin(sim))
        centers.append(y[nxt])
        sim = np.maximum(sim, y @ y[nxt])
    c = np.array(centers)
    labels = np.argmax(y @ c.T, axis=1)
    for _ in range(max_iter):
        for j in range(k):
            members = y[labels == j]
            if members.shape[0] == 0:
                raise BlogspaceError(
                    f"branch clustering produced an empty cluster; try fewer than {k} communities"
                )
            s = members.sum(axis=0)
            norm = np.linalg.norm(s)
            c[j] = s / norm if norm > 0 else members[0]
        new = np.argmax(y @ c.T, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return labels


def assign_branches(spec: Spectrum, k: int, eps_ring: float = RING_EPS) -> CommunityAssignment:
    """Split nodes into ``k`` branches of the low-eigenvector scatter plot.

    Rows of the embedding shorter than ``eps_ring`` times the longest row
    form the unclassified central ring.  The rest are projected onto the unit
    sphere and clustered by spherical k-means seeded at the longest row.
    Labels are numbered by decreasing community size, ties broken by the
    smallest node id.
    """
    if k < 2:
        raise ValueError("branch assignment needs k >= 2")
    cols = _embedding_columns(spec, k)
    if cols[-1] >= spec.k:
        raise ValueError(f"spectrum holds {spec.k} vectors, {cols[-1] + 1} needed for k={k}")
    x = spec.vectors[:, cols]
    norms = np.linalg.norm(x, axis=1)
    ring = norms < eps_ring * norms.max()
    live = np.flatnonzero(~ring)
    if live.size < k:
        raise BlogspaceError(f"only {live.size} nodes outside the central ring; try a smaller k")
    # seed from the longest row: move it to the front
    order = np.concatenate([[live[np.argmax(norms[live])]], live[live != live[np.argmax(norms[live])]]])
    y = x[order] / norms[order, None]
    raw = spherical_kmeans(y, k)

    nodes = spec.nodes
    groups = [order[raw == j] for j in range(k)]
    groups.sort(key=lambda g: (-g.size, min(nodes[i] for i in g)))
    labels = np.zeros(len(nodes), dtype=np.int64)
    for lab, members in enumerate(groups, start=1):
        labels[members] = lab
    return CommunityAssignment(list(nodes), labels, k, norms)


def scatter_export(spec: Spectrum, dims: int, assignment: CommunityAssignment | None = None) -> list[tuple]:
    """Rows ``(node, coord_1..coord_dims, label)`` from the vectors after the zero eigenspace."""
    if dims not in (2, 3):
        raise ValueError("dims must be 2 or 3")
    start = max(spec.n_zero, 1)
    if spec.k < start + dims:
        raise ValueError(f"need {dims} eigenvectors beyond the zero eigenspace, have {spec.k - start}")
    coords = spec.vectors[:, start:start + dims]
    labels = assignment.labels if assignment is not None else np.zeros(len(spec.nodes), dtype=np.int64)
    return [(node, *map(float, coords[i]), int(labels[i])) for i, node in enumerate(spec.nodes)]


def nmi(a, b) -> float:
    """Normalized mutual information, arithmetic-mean normalisation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1)
    joint /= joint.sum()
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(pa, pb)[nz])))
    ha = float(-np.sum(pa * np.log(pa)))
    hb = float(-np.sum(pb * np.log(pb)))
    if ha + hb == 0:
        return 1.0
    return max(0.0, 2.0 * mi / (ha + hb))


# -- files ----------------------------------------------------------------------

def write_spectrum_tsv(spec: Spectrum, path: str | Path, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        for key, val in (extra or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("index\teigenvalue\tresidual\n")
        for i, (lam, r) in enumerate(zip(spec.values, spec.residuals), start=1):
            fh.write(f"{i}\t{float(lam)!r}\t{float(r)!r}\n")


def read_spectrum_tsv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rows = [ln.split("\t") for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")][1:]
    return np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows])


def write_scatter_tsv(rows: list[tuple], path: str | Path) -> None:
    dims = len(rows[0]) - 2 if rows else 3
    axes = ["x", "y", "z"][:dims]
    with open(path, "w") as fh:
        fh.write("\t".join(["node", *axes, "label"]) + "\n")
        for row in rows:
            node, *coords, label = row
            fh.write("\t".join([node, *(repr(c) for c in coords), str(label)]) + "\n")


def read_scatter_tsv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    body = [ln.split("\t") for ln in lines[1:] if ln]
    nodes = [r[0] for r in body]
    coords = np.array([[float(v) for v in r[1:-1]] for r in body])
    labels = np.array([int(r[-1]) for r in body], dtype=np.int64)
    return nodes, coords, labels


def write_labels_tsv(assignment: CommunityAssignment, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("node\tlabel\trow_norm\n")
        for node, lab, r in zip(assignment.nodes, assignment.labels, assignment.row_norms):
            fh.write(f"{node}\t{int(lab)}\t{float(r)!r}\n")


def read_labels_tsv(path: str | Path) -> dict[str, int]:
    lines = Path(path).read_text().splitlines()
    return {r[0]: int(r[1]) for r in (ln.split("\t") for ln in lines[1:] if ln)}


def write_laplacian(lap: LaplacianMatrix, path: str | Path) -> None:
    """Upper triangle (diagonal included) as ``src dst value`` triplets."""
    upper = sp.triu(lap.matrix).tocoo()
    order = np.lexsort((upper.col, upper.row))
    trip = ((lap.nodes[r], lap.nodes[c], float(v)) for r, c, v in zip(upper.row[order], upper.col[order], upper.data[order]))
    write_triplets(path, trip, lap.n, lap.n, 0)


def read_laplacian(path: str | Path) -> tuple[list[str], sp.csr_matrix]:
    """Rebuild the symmetric matrix from a triplet file; nodes in order of appearance."""
    _, rows = read_triplets(path)
    nodes: list[str] = []
    idx: dict[str, int] = {}
    for s, t, _ in rows:
        for n in (s, t):
            if n not in idx:
                idx[n] = len(nodes)
                nodes.append(n)
    r = [idx[s] for s, _, _ in rows]
    c = [idx[t] for _, t, _ in rows]
    v = [float(w) for _, _, w in rows]
    m = sp.coo_matrix((v, (r, c)), shape=(len(nodes), len(nodes))).tocsr()
    # appearance order need not match file order, so mirror every off-diagonal entry
    off = m - sp.diags(m.diagonal())
    return nodes, (m + off.T).tocsr()
