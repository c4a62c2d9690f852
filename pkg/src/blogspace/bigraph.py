"""Directed bipartite user/content network and its user projection.

Edges run user -> content for authorship and content -> user for reading.
Reading is only known through commenting: a comment on post ``p`` means its
author read ``p`` and, for a reply, the parent comment as well.  Multiple
edges between the same pair are kept as a multiplicity.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .distributions import Distribution
from .errors import EmptyDataError, LogValidationError
from .ingest import EventLog, Kind, validate_log


class Mode(str, enum.Enum):
    COMMENT_TREE = "tree"
    FLATTEN_TO_POST = "flatten"


@dataclass
class BipartiteGraph:
    users: list[str]
    content: list[str]
    content_kind: dict[str, Kind]
    author: dict[str, str]
    root: dict[str, str]  # content id -> post id
    writes: Counter  # (user, content) -> multiplicity
    reads: Counter  # (content, user) -> multiplicity
    mode: Mode

    @property
    def n_edges(self) -> int:
        return len(self.writes) + len(self.reads)

    def edges(self):
        """Yield ``(source, target, multiplicity)`` in a fixed order."""
        for (u, c), m in sorted(self.writes.items()):
            yield u, c, m
        for (c, u), m in sorted(self.reads.items()):
            yield c, u, m

    def degrees(self, partition: str, direction: str) -> np.ndarray:
        """Multiplicity-counted degrees for every node of a partition."""
        if direction not in ("in", "out"):
            raise ValueError(f"direction must be 'in' or 'out', not {direction!r}")
        if partition == "users":
            nodes = self.users
            table = self.writes if direction == "out" else self.reads
            pos = 0 if direction == "out" else 1
        elif partition in ("content", "posts", "comments"):
            if partition == "content":
                nodes = self.content
            else:
                want = Kind.POST if partition == "posts" else Kind.COMMENT
                nodes = [c for c in self.content if self.content_kind[c] is want]
            table = self.reads if direction == "out" else self.writes
            pos = 0 if direction == "out" else 1
        else:
            raise ValueError(f"unknown partition {partition!r}")
        acc = Counter()
        for key, m in table.items():
            acc[key[pos]] += m
        return np.array([acc.get(n, 0) for n in nodes], dtype=np.int64)

    def incidence(self) -> sp.csr_matrix:
        """Binary users x content matrix: 1 where any edge joins the pair."""
        uidx = {u: i for i, u in enumerate(self.users)}
        cidx = {c: j for j, c in enumerate(self.content)}
        pairs = {(uidx[u], cidx[c]) for u, c in self.writes}
        pairs.update((uidx[u], cidx[c]) for c, u in self.reads)
        if pairs:
            rows, cols = np.array(sorted(pairs), dtype=np.int64).T
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        data = np.ones(rows.size, dtype=np.int64)
        return sp.csr_matrix((data, (rows, cols)), shape=(len(self.users), len(self.content)))


def build_bipartite(log: EventLog, mode: Mode | str = Mode.COMMENT_TREE) -> BipartiteGraph:
    mode = Mode(mode)
    report = validate_log(log)
    if not report.ok:
        raise LogValidationError(report)
    writes: Counter = Counter()
    reads: Counter = Counter()
    author: dict[str, str] = {}
    root: dict[str, str] = {}
    kinds: dict[str, Kind] = {}
    for ev in log.events:
        if ev.kind is Kind.POST:
            writes[ev.actor, ev.event_id] += 1
            author[ev.event_id] = ev.actor
            root[ev.event_id] = ev.event_id
            kinds[ev.event_id] = Kind.POST
            continue
        reads[ev.post, ev.actor] += 1
        if mode is Mode.COMMENT_TREE:
            writes[ev.actor, ev.event_id] += 1
            author[ev.event_id] = ev.actor
            root[ev.event_id] = ev.post
            kinds[ev.event_id] = Kind.COMMENT
            if ev.parent is not None:
                reads[ev.parent, ev.actor] += 1
        else:
            writes[ev.actor, ev.post] += 1
            if ev.parent is not None:
                reads[ev.post, ev.actor] += 1
    users = sorted(log.by_user)
    content = sorted(kinds)
    return BipartiteGraph(users, content, kinds, author, root, writes, reads, mode)


def attribution_totals(g: BipartiteGraph) -> Counter:
    """Comments written per (user, root post); identical for both build modes."""
    totals: Counter = Counter()
    for (u, c), m in g.writes.items():
        if g.content_kind[c] is Kind.COMMENT:
            totals[u, g.root[c]] += m
        elif g.mode is Mode.FLATTEN_TO_POST:
            own = 1 if g.author[c] == u else 0
            if m > own:
                totals[u, c] += m - own
    return totals


def degree_distribution(
    g: BipartiteGraph, partition: str = "users", direction: str = "out", cumulative: bool = False
) -> Distribution:
    deg = g.degrees(partition, direction)
    if deg.size == 0:
        raise EmptyDataError(f"partition {partition!r} is empty")
    return Distribution.from_samples(
        deg, discrete=True, name=f"degree_{partition}_{direction}", cumulative=cumulative
    )


@dataclass
class CommonsMatrix:
    users: list[str]
    matrix: sp.csr_matrix  # symmetric, zero diagonal, integer counts

    def get(self, a: str, b: str) -> int:
        i, j = self.users.index(a), self.users.index(b)
        return int(self.matrix[i, j])

    def pair_values(self) -> np.ndarray:
        """Nonzero commons, one per unordered user pair."""
        upper = sp.triu(self.matrix, k=1).tocoo()
        return upper.data[upper.data > 0]


def commons_matrix(g: BipartiteGraph) -> CommonsMatrix:
    b = g.incidence()
    c = (b @ b.T).tocsr()
    c.setdiag(0)
    c.eliminate_zeros()
    c.sort_indices()
    return CommonsMatrix(list(g.users), c)


def commons_distribution(c: CommonsMatrix) -> Distribution:
    values = c.pair_values()
    if values.size == 0:
        raise EmptyDataError("commons matrix has no nonzero entry")
    return Distribution.from_samples(values, discrete=True, name="commons")


@dataclass
class WeightedUserGraph:
    nodes: list[str]
    adjacency: sp.csr_matrix  # symmetric, float, no self-loops

    @property
    def strengths(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edges(self):
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        for r, c, w in zip(upper.row[order], upper.col[order], upper.data[order]):
            yield self.nodes[r], self.nodes[c], float(w)

    @classmethod
    def from_edges(cls, nodes, edges) -> "WeightedUserGraph":
        """Undirected graph from ``(i, j, w)`` triples over ``nodes``; duplicates add up."""
        nodes = list(nodes)
        idx = {n: k for k, n in enumerate(nodes)}
        rows, cols, vals = [], [], []
        for a, b, w in edges:
            i, j = idx[a], idx[b]
            if i == j:
                raise ValueError("self-loops are not allowed")
            if w <= 0:
                raise ValueError("edge weights must be positive")
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(nodes), len(nodes)), dtype=float)
        m.sum_duplicates()
        return cls(nodes, m)


def project_user_graph(c: CommonsMatrix) -> WeightedUserGraph:
    return WeightedUserGraph(list(c.users), c.matrix.astype(float).tocsr())


@dataclass
class UserPostWeightedGraph:
    users: list[str]
    posts: list[str]
    weights: sp.csr_matrix  # users x posts, comment counts

    @property
    def nodes(self) -> list[str]:
        return [f"user:{u}" for u in self.users] + [f"post:{p}" for p in self.posts]

    @property
    def adjacency(self) -> sp.csr_matrix:
        return sp.bmat([[None, self.weights], [self.weights.T, None]], format="csr").astype(float)

    @property
    def strengths(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())


def build_user_post_weighted(log: EventLog, min_comments: int = 100) -> UserPostWeightedGraph:
    """Users x posts graph restricted to posts with more than ``min_comments`` comments.

    The weight of (user, post) counts every comment the user left anywhere
    in that post's thread.
    """
    if min_comments < 0:
        raise ValueError("min_comments must be non-negative")
    counts = log.comment_counts()
    posts = sorted(p for p, n in counts.items() if n > min_comments)
    if not posts:
        raise EmptyDataError(f"no post has more than {min_comments} comments")
    selected = set(posts)
    w: Counter = Counter()
    for ev in log.events:
        if ev.kind is Kind.COMMENT and ev.post in selected:
            w[ev.actor, ev.post] += 1
    users = sorted({u for u, _ in w})
    uidx = {u: i for i, u in enumerate(users)}
    pidx = {p: j for j, p in enumerate(posts)}
    keys = sorted(w)
    rows = [uidx[u] for u, _ in keys]
    cols = [pidx[p] for _, p in keys]
    vals = [w[k] for k in keys]
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(users), len(posts)), dtype=np.int64)
    return UserPostWeightedGraph(users, posts, m)


# -- coordinate triplet files -------------------------------------------------

def write_triplets(path: str | Path, triplets, n_nodes: int, n_users: int, n_content: int) -> None:
    """Write ``src dst weight`` lines after a two-line header."""
    triplets = list(triplets)
    with open(path, "w") as fh:
        fh.write(f"# nodes={n_nodes} edges={len(triplets)}\n")
        fh.write(f"# partitions users={n_users} content={n_content}\n")
        for s, t, w in triplets:
            if isinstance(w, float) and not w.is_integer():
                fh.write(f"{s} {t} {w!r}\n")
            else:
                fh.write(f"{s} {t} {int(w)}\n")


def read_triplets(path: str | Path) -> tuple[dict, list[tuple[str, str, float]]]:
    meta: dict = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = int(v)
                continue
            s, t, w = line.split(" ")
            rows.append((s, t, int(w) if w.lstrip("-").isdigit() else float(w)))
    if meta.get("edges", len(rows)) != len(rows):
        raise ValueError(f"{path}: header announces {meta['edges']} edges, found {len(rows)}")
    return meta, rows


def write_bipartite(g: BipartiteGraph, path: str | Path) -> None:
    write_triplets(path, g.edges(), len(g.users) + len(g.content), len(g.users), len(g.content))


def write_user_graph(g: WeightedUserGraph, path: str | Path) -> None:
    write_triplets(path, g.edges(), len(g.nodes), len(g.nodes), 0)


def write_user_post_graph(g: UserPostWeightedGraph, path: str | Path) -> None:
    coo = g.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    trip = ((g.users[r], g.posts[c], int(v)) for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]))
    write_triplets(path, trip, len(g.users) + len(g.posts), len(g.users), len(g.posts))
