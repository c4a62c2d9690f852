"""Synthetic blog logs with planted user groups.

Every user runs a renewal process whose gaps come from the configured
sampler and picks a target group for each event (own group with weight
``p_in``, each other group with weight ``p_out``).  Posts belong to groups.
Each group's comments are first laid out as post time + response delay,
with delays drawn exactly from the q-exponential kernel truncated at the
horizon, and then handed to the users' desired event times in rank order.
Post creation times are drawn from the group's desired event times, so the
slot density tracks the desired density.  Response times are exact kernel
draws, while user gaps follow the sampler up to the residual burstiness of
comment slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bigraph import WeightedUserGraph
from .errors import BlogspaceError
from .ingest import EventLog, EventRecord, Kind, write_event_log
from .tempstats import QExpFit


@dataclass(frozen=True)
class Pareto:
    """Gap density proportional to ``x**-alpha`` above ``x_min`` minutes."""

    alpha: float = 1.5
    x_min: float = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.x_min * (1.0 - rng.random(size)) ** (-1.0 / (self.alpha - 1.0))


@dataclass(frozen=True)
class Exponential:
    rate: float = 0.01  # events per minute

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size)


@dataclass
class SynthConfig:
    n_groups: int = 4
    users_per_group: int = 100
    posts_per_group: int = 100
    p_in: float = 0.95
    p_out: float = 0.05
    interevent: Pareto | Exponential = field(default_factory=Pareto)
    activity_spread: float = 0.0  # decades of per-user time-scale variation
    response: QExpFit = field(default_factory=lambda: QExpFit(q=1.55, t_star=60.0, prefactor=1.0))
    popularity_shape: float | None = None  # Pareto tail index of post attractiveness
    reply_prob: float = 0.2
    horizon: int = 43200
    seed: int = 0

    @property
    def n_users(self) -> int:
        return self.n_groups * self.users_per_group

    def check(self) -> None:
        if self.n_groups < 1 or self.users_per_group < 1 or self.posts_per_group < 1:
            raise ValueError("groups, users per group and posts per group must be positive")
        for name in ("p_in", "p_out", "reply_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_groups > 1 and not self.p_in > self.p_out:
            raise ValueError("p_in must exceed p_out to plant structure")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if isinstance(self.interevent, Pareto) and not (self.interevent.alpha > 1 and self.interevent.x_min > 0):
            raise ValueError("Pareto sampler needs alpha > 1 and x_min > 0")
        if isinstance(self.interevent, Exponential) and not self.interevent.rate > 0:
            raise ValueError("exponential rate must be positive")
        if not (self.response.q < 2 and self.response.t_star > 0):
            raise ValueError("response kernel needs q < 2 and t_star > 0")


@dataclass
class GroundTruth:
    user_group: dict[str, int]
    post_group: dict[str, int]
    post_comments: dict[str, int]

    def user_labels(self, users) -> np.ndarray:
        return np.array([self.user_group[u] for u in users])


def qexp_cdf(x, q: float, t_star: float):
    """CDF of the normalised q-exponential density (``q < 2``)."""
    x = np.asarray(x, dtype=float)
    if abs(q - 1.0) < 1e-8:
        return -np.expm1(-x / t_star)
    base = np.maximum(1.0 - (1.0 - q) * x / t_star, 0.0)
    return 1.0 - base ** ((2.0 - q) / (1.0 - q))


def qexp_ppf(u, q: float, t_star: float):
    u = np.asarray(u, dtype=float)
    if abs(q - 1.0) < 1e-8:
        return -t_star * np.log1p(-u)
    return t_star / (q - 1.0) * ((1.0 - u) ** ((1.0 - q) / (2.0 - q)) - 1.0)


def sample_qexp(rng: np.random.Generator, q: float, t_star: float, size: int, upper=None) -> np.ndarray:
    """Inverse-CDF draws, optionally truncated to ``[0, upper)`` per draw."""
    u = rng.random(size)
    if upper is not None:
        u = u * qexp_cdf(upper, q, t_star)
    return qexp_ppf(u, q, t_star)


def _renewal_times(rng, sampler, scale: float, horizon: int) -> np.ndarray:
    chunks, t, size = [], 0.0, 64
    while t < horizon:
        gaps = sampler.sample(rng, size) * scale
        times = t + np.cumsum(gaps)
        chunks.append(times)
        t = float(times[-1])
        size = min(size * 2, 1 << 16)
    times = np.concatenate(chunks)
    return times[times < horizon]


def _width(n: int) -> int:
    return max(1, len(str(max(n - 1, 0))))


def generate(config: SynthConfig) -> tuple[EventLog, GroundTruth]:
    config.check()
    rng = np.random.default_rng(config.seed)
    G, upg, ppg = config.n_groups, config.users_per_group, config.posts_per_group
    n_users, n_posts = G * upg, G * ppg
    uw, pw = _width(n_users), _width(n_posts)
    users = [f"u{i:0{uw}d}" for i in range(n_users)]
    user_group = np.repeat(np.arange(G), upg)
    post_group = np.repeat(np.arange(G), ppg)

    # desired user activity
    weights = np.full((G, G), config.p_out / max(G - 1, 1))
    np.fill_diagonal(weights, config.p_in)
    if G == 1:
        weights[:] = 1.0
    weights /= weights.sum(axis=1, keepdims=True)
    ev_user, ev_time, ev_group = [], [], []
    for u in range(n_users):
        scale = 10.0 ** (rng.random() * config.activity_spread) if config.activity_spread else 1.0
        times = _renewal_times(rng, config.interevent, scale, config.horizon)
        ev_user.append(np.full(times.size, u))
        ev_time.append(times)
        ev_group.append(rng.choice(G, size=times.size, p=weights[user_group[u]]))
    ev_user = np.concatenate(ev_user)
    ev_time = np.concatenate(ev_time)
    ev_group = np.concatenate(ev_group)
    if ev_time.size == 0:
        raise BlogspaceError("horizon too short to place any comment")

    # posts open when their group is busy, so that comment slots and desired
    # events share one time density and rank matching barely warps user gaps
    post_time = rng.integers(0, config.horizon, size=n_posts)
    for g in range(G):
        busy = ev_time[ev_group == g]
        if busy.size:
            j = np.flatnonzero(post_group == g)
            post_time[j] = np.floor(busy[rng.integers(0, busy.size, size=j.size)]).astype(np.int64)
    post_author = post_group * upg + rng.integers(0, upg, size=n_posts)
    if config.popularity_shape is None:
        attract = np.ones(n_posts)
    else:
        attract = (1.0 - rng.random(n_posts)) ** (-1.0 / config.popularity_shape)

    c_user, c_post, c_time = [], [], []
    q, t_star = config.response.q, config.response.t_star
    for g in range(G):
        mine = np.flatnonzero(ev_group == g)
        if mine.size == 0:
            continue
        posts_g = np.flatnonzero(post_group == g)
        p = attract[posts_g] / attract[posts_g].sum()
        slot_post = posts_g[rng.choice(posts_g.size, size=mine.size, p=p)]
        room = config.horizon - post_time[slot_post]
        delay = np.floor(sample_qexp(rng, q, t_star, mine.size, upper=room))
        delay = np.minimum(delay, room - 1)
        slot_time = post_time[slot_post] + delay.astype(np.int64)
        slot_order = np.lexsort((slot_post, slot_time))
        want_order = np.lexsort((ev_user[mine], ev_time[mine]))
        c_user.append(ev_user[mine][want_order])
        c_post.append(slot_post[slot_order])
        c_time.append(slot_time[slot_order])
    c_user = np.concatenate(c_user)
    c_post = np.concatenate(c_post)
    c_time = np.concatenate(c_time)

    order = np.lexsort((c_user, c_post, c_time))
    c_user, c_post, c_time = c_user[order], c_post[order], c_time[order]
    cw = _width(c_user.size)
    post_ids = [f"p{j:0{pw}d}" for j in range(n_posts)]
    comment_ids = [f"c{i:0{cw}d}" for i in range(c_user.size)]

    records = [
        EventRecord(post_ids[j], Kind.POST, users[post_author[j]], post_ids[j], None, int(post_time[j]))
        for j in range(n_posts)
    ]
    earlier: dict[int, list[int]] = {}
    reply_draw = rng.random(c_user.size)
    pick_draw = rng.random(c_user.size)
    for i in range(c_user.size):
        j = int(c_post[i])
        prev = earlier.setdefault(j, [])
        parent = None
        if prev and reply_draw[i] < config.reply_prob:
            parent = comment_ids[prev[int(pick_draw[i] * len(prev))]]
        records.append(EventRecord(comment_ids[i], Kind.COMMENT, users[c_user[i]], post_ids[j], parent, int(c_time[i])))
        prev.append(i)

    counts = np.bincount(c_post, minlength=n_posts)
    truth = GroundTruth(
        user_group={users[u]: int(user_group[u]) for u in range(n_users)},
        post_group={post_ids[j]: int(post_group[j]) for j in range(n_posts)},
        post_comments={post_ids[j]: int(counts[j]) for j in range(n_posts)},
    )
    return EventLog(records), truth


def write_truth_tsv(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("id\tkind\tgroup\n")
        for u, g in truth.user_group.items():
            fh.write(f"{u}\tuser\t{g}\n")
        for p, g in truth.post_group.items():
            fh.write(f"{p}\tpost\t{g}\n")


def read_truth_tsv(path: str | Path) -> tuple[dict[str, int], dict[str, int]]:
    users, posts = {}, {}
    for line in Path(path).read_text().splitlines()[1:]:
        if not line:
            continue
        i, kind, g = line.split("\t")
        (users if kind == "user" else posts)[i] = int(g)
    return users, posts


def write_synth(log: EventLog, truth: GroundTruth, path: str | Path, truth_path: str | Path | None = None) -> None:
    with open(path, "w") as fh:
        write_event_log(log, fh, "jsonl")
    if truth_path is not None:
        write_truth_tsv(truth, truth_path)


def planted_partition_graph(
    sizes, p_in: float, p_out: float, seed: int = 0, weights: tuple[float, float] | None = None
) -> tuple[WeightedUserGraph, np.ndarray]:
    """Stochastic block model; edge weights uniform in ``weights`` (default all 1)."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = labels.size
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    if weights is None:
        w = upper.astype(float)
    else:
        w = upper * rng.uniform(weights[0], weights[1], size=(n, n))
    w = w + w.T
    width = _width(n)
    return WeightedUserGraph([f"n{i:0{width}d}" for i in range(n)], sp.csr_matrix(w)), labels
