"""Temporal statistics of an event log.

Inter-event intervals, binned activity series, fluctuation scaling
``sigma = c * mean**mu``, periodograms, response times and the
q-exponential response-time density

    P(dt) = C * (1 - (1 - q) * dt / t_star) ** (1 / (1 - q))

which has a power-law tail with exponent ``1 / (q - 1)`` for ``1 < q < 2``.
All times are integer minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .distributions import Distribution, read_header_meta
from .errors import EmptyDataError, FitError
from .ingest import EventLog, Kind

USER_WINDOW = 1440  # one day
POST_WINDOW = 60  # one hour
Q_ONE_TOL = 1e-8


@dataclass
class TimeSeries:
    owner: str
    t_win: int
    start: int
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.counts)


@dataclass
class ScalingPoint:
    owner: str
    mean: float
    sigma: float


@dataclass
class PowerLawFit:
    """Straight-line fit in log-log space.

    ``exponent`` is the negated slope for decaying tails (``fit_powerlaw``)
    and the plain slope for fluctuation scaling; ``prefactor`` is
    ``10**intercept``.  ``residual`` is the RMS log10 deviation.
    """

    exponent: float
    prefactor: float
    x_min: float
    x_max: float
    residual: float
    n_points: int
    target: str = "pdf"

    def as_dict(self, prefix: str = "fit") -> dict:
        return {
            f"{prefix}.exponent": self.exponent,
            f"{prefix}.prefactor": self.prefactor,
            f"{prefix}.x_min": self.x_min,
            f"{prefix}.x_max": self.x_max,
            f"{prefix}.residual": self.residual,
            f"{prefix}.n_points": self.n_points,
            f"{prefix}.target": self.target,
        }


@dataclass
class ScalingResult:
    points: list[ScalingPoint]
    fit: PowerLawFit
    excluded: list[str] = field(default_factory=list)

    @property
    def mu(self) -> float:
        return self.fit.exponent

    @property
    def c(self) -> float:
        return self.fit.prefactor


@dataclass
class QExpFit:
    q: float
    t_star: float
    prefactor: float
    residual: float = 0.0

    @property
    def tail_slope(self) -> float:
        """Power-law exponent of the density tail, ``1/(q-1)``."""
        if self.q <= 1:
            return math.inf
        return 1.0 / (self.q - 1.0)

    def as_dict(self) -> dict:
        return {
            "qexp.q": self.q,
            "qexp.t_star": self.t_star,
            "qexp.prefactor": self.prefactor,
            "qexp.residual": self.residual,
            "qexp.tail_slope": self.tail_slope,
        }


def q_from_tail_slope(slope: float) -> float:
    return 1.0 + 1.0 / slope


# -- samples and series -------------------------------------------------------

def interevent_samples(log: EventLog) -> np.ndarray:
    """Pooled gaps between successive events of each user, in minutes."""
    gaps = []
    for user in sorted(log.by_user):
        idx = log.by_user[user]
        if len(idx) < 2:
            continue
        ts = np.fromiter((log.events[i].ts for i in idx), dtype=np.int64, count=len(idx))
        gaps.append(np.diff(ts))
    if not gaps:
        raise EmptyDataError("no user has two or more events")
    return np.concatenate(gaps)


def interevent_distribution(log: EventLog) -> Distribution:
    return Distribution.from_samples(interevent_samples(log), discrete=True, name="intervals")


def _resolve_kind(log: EventLog, owner: str, kind: str | None) -> str:
    is_user = owner in log.by_user
    is_post = owner in log.by_id and log.by_id[owner].kind is Kind.POST
    if kind is None:
        if is_user and is_post:
            raise ValueError(f"{owner!r} is both a user and a post; pass kind")
        kind = "user" if is_user else "post" if is_post else None
    if kind == "user" and is_user or kind == "post" and is_post:
        return kind
    raise KeyError(f"unknown {kind or 'owner'} {owner!r}")


def activity_series(log: EventLog, owner: str, t_win: int | None = None, kind: str | None = None) -> TimeSeries:
    """Events per window for a user, or comments received per window for a post.

    User series run from the first to the last event; post series start at
    the post's creation.
    """
    kind = _resolve_kind(log, owner, kind)
    if t_win is None:
        t_win = USER_WINDOW if kind == "user" else POST_WINDOW
    if t_win <= 0:
        raise ValueError("window length must be positive")
    if kind == "user":
        times = np.array([log.events[i].ts for i in log.by_user[owner]], dtype=np.int64)
        start = int(times[0])
        end = int(times[-1])
    else:
        start = log.by_id[owner].ts
        times = np.array([ev.ts for ev in log.post_comments(owner)], dtype=np.int64)
        end = int(times.max()) if times.size else start
    nbins = (end - start) // t_win + 1
    counts = np.bincount((times - start) // t_win, minlength=nbins).astype(np.int64)
    return TimeSeries(owner, t_win, start, counts)


def all_activity_series(log: EventLog, t_win: int | None = None, kind: str = "user") -> list[TimeSeries]:
    owners = sorted(log.by_user) if kind == "user" else sorted(ev.event_id for ev in log.posts)
    return [activity_series(log, o, t_win, kind) for o in owners]


def _loglog_lsq(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    lx, ly = np.log10(x), np.log10(y)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2)))


def fluctuation_scaling(series: Iterable[TimeSeries], min_points: int = 10) -> ScalingResult:
    points, excluded = [], []
    for ts in series:
        counts = np.asarray(ts.counts, dtype=float)
        mean, sigma = float(counts.mean()), float(counts.std())
        if mean > 0 and sigma > 0:
            points.append(ScalingPoint(ts.owner, mean, sigma))
        else:
            excluded.append(ts.owner)
    if len(points) < min_points:
        raise EmptyDataError(
            f"fluctuation scaling needs {min_points} series with nonzero variance, got {len(points)}"
        )
    means = np.array([p.mean for p in points])
    sigmas = np.array([p.sigma for p in points])
    slope, intercept, resid = _loglog_lsq(means, sigmas)
    fit = PowerLawFit(slope, 10 ** intercept, float(means.min()), float(means.max()), resid, len(points), "scaling")
    return ScalingResult(points, fit, excluded)


@dataclass
class PowerSpectrum:
    owner: str
    frequency: np.ndarray  # cycles per bin
    power: np.ndarray


def power_spectrum(ts: TimeSeries, min_bins: int = 16) -> PowerSpectrum:
    """One-sided periodogram of the mean-removed counts.

    Normalised so that the powers over all positive frequencies sum to the
    series variance.
    """
    x = np.asarray(ts.counts, dtype=float)
    n = x.size
    if n < min_bins:
        raise EmptyDataError(f"power spectrum needs at least {min_bins} bins, got {n}")
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2 / n ** 2
    power = spec[1:].copy()
    if n % 2 == 0:
        power[:-1] *= 2
    else:
        power *= 2
    freq = np.arange(1, n // 2 + 1) / n
    return PowerSpectrum(ts.owner, freq, power)


def response_time_samples(log: EventLog) -> np.ndarray:
    """Minutes from each comment's root post to the comment."""
    post_ts = {ev.event_id: ev.ts for ev in log.events if ev.kind is Kind.POST}
    out = np.array(
        [ev.ts - post_ts[ev.post] for ev in log.events if ev.kind is Kind.COMMENT and ev.post in post_ts],
        dtype=np.int64,
    )
    if out.size == 0:
        raise EmptyDataError("log has no comments")
    return out


# -- q-exponential ------------------------------------------------------------

def qexp_eval(params: QExpFit, dt):
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("dt must be non-negative")
    q, t_star, c = params.q, params.t_star, params.prefactor
    if abs(q - 1.0) < Q_ONE_TOL:
        out = c * np.exp(-dt / t_star)
    else:
        base = 1.0 - (1.0 - q) * dt / t_star
        if np.any(base <= 0):
            raise ValueError("dt outside the support of the q-exponential")
        out = c * base ** (1.0 / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def _qexp_antiderivative(x: np.ndarray, q: float, t_star: float) -> np.ndarray:
    """Antiderivative of the unit-prefactor density; tends to 0 at the far end of the support."""
    if abs(q - 1.0) < Q_ONE_TOL:
        return -t_star * np.exp(-x / t_star)
    if abs(q - 2.0) < Q_ONE_TOL:
        return t_star * np.log1p(x / t_star)
    arg = -(1.0 - q) * x / t_star
    if q < 1:
        arg = np.maximum(arg, -1.0)
        with np.errstate(divide="ignore"):
            logb = np.log1p(arg)
    else:
        logb = np.log1p(arg)
    with np.errstate(over="ignore", under="ignore"):
        return -t_star / (2.0 - q) * np.exp((2.0 - q) / (1.0 - q) * logb)


def qexp_bin_means(q: float, t_star: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Average of the unit-prefactor q-exponential over each ``[lo, hi)`` bin."""
    return (_qexp_antiderivative(hi, q, t_star) - _qexp_antiderivative(lo, q, t_star)) / (hi - lo)


def fit_qexp(
    samples,
    min_samples: int = 1000,
    min_count: int = 20,
    max_iter: int = 4000,
) -> QExpFit:
    """Fit ``(q, t_star, C)`` to the log-binned density of ``samples``.

    Minimises squared log residuals between each bin's empirical density and
    the model averaged over the same bin.  Bins holding fewer than
    ``min_count`` samples are left out.  For given ``(q, t_star)`` the best
    ``log C`` is the mean residual, so only two parameters are searched.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise EmptyDataError(f"q-exponential fit needs {min_samples} samples, got {x.size}")
    d = Distribution.from_samples(x)
    keep = d.counts >= min_count
    if keep.sum() < 4:
        raise FitError("too few populated bins for a q-exponential fit")
    lo, hi, emp = d.lo[keep], d.hi[keep], np.log(d.pdf[keep])

    penalty = 1e12, 0.0

    def profile(theta):
        q, log_t = theta
        if not 0.0 < q < 1.999:
            return penalty
        t_star = math.exp(log_t)
        if q < 1 and hi[-1] > t_star / (1.0 - q):
            return penalty
        model = qexp_bin_means(q, t_star, lo, hi)
        if not np.all(model > 0):
            return penalty
        r = emp - np.log(model)
        log_c = float(r.mean())
        return float(np.sum((r - log_c) ** 2)), log_c

    scale = max(float(np.median(x)), 1.0)
    best = None
    for q0 in (0.9, 1.2, 1.5, 1.8):
        for t0 in (scale, 0.2 * scale):
            res = minimize(
                lambda th: profile(th)[0],
                x0=[q0, math.log(t0)],
                method="Nelder-Mead",
                options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-10},
            )
            if res.fun < penalty[0] and (best is None or res.fun < best.fun):
                best = res
    if best is None:
        raise FitError("q-exponential fit found no admissible parameters")
    q, log_t = best.x
    sse, log_c = profile(best.x)
    fit = QExpFit(float(q), math.exp(log_t), math.exp(log_c), math.sqrt(sse / keep.sum()))
    if not best.success:
        raise FitError(f"q-exponential fit did not converge: {best.message}", best=fit)
    return fit


# -- power laws ---------------------------------------------------------------

def default_fit_range(d: Distribution) -> tuple[float, float]:
    if d.samples is None:
        raise ValueError("default fit range needs raw samples; pass x_range")
    return d.percentile(50), d.percentile(99)


def fit_powerlaw(
    d: Distribution, x_range: tuple[float, float] | None = None, target: str | None = None, min_bins: int = 5
) -> PowerLawFit:
    """Least-squares slope of the log-log pdf (or ccdf) inside ``x_range``.

    Bins enter when their geometric centre lies in the range (for the ccdf,
    the lower bin edge).  The default range is median to 99th percentile.
    """
    target = target or ("ccdf" if d.cumulative else "pdf")
    if target not in ("pdf", "ccdf"):
        raise ValueError(f"unknown fit target {target!r}")
    x_min, x_max = x_range if x_range is not None else default_fit_range(d)
    if not x_min < x_max:
        raise ValueError("fit range must satisfy x_min < x_max")
    x = d.centers if target == "pdf" else d.lo
    y = d.pdf if target == "pdf" else d.ccdf
    sel = (x >= x_min) & (x <= x_max) & (x > 0) & (y > 0)
    if sel.sum() < min_bins:
        raise FitError(f"only {int(sel.sum())} populated bins in [{x_min}, {x_max}], need {min_bins}")
    slope, intercept, resid = _loglog_lsq(x[sel], y[sel])
    return PowerLawFit(-slope, 10 ** intercept, float(x_min), float(x_max), resid, int(sel.sum()), target)


# -- TSV output -----------------------------------------------------------------

def write_series_tsv(ts: TimeSeries, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# owner={ts.owner}\n# t_win={ts.t_win}\n# start={ts.start}\n")
        fh.write("bin_start\tcount\n")
        for i, c in enumerate(ts.counts):
            fh.write(f"{ts.start + i * ts.t_win}\t{int(c)}\n")


def read_series_tsv(path: str | Path) -> TimeSeries:
    lines = Path(path).read_text().splitlines()
    meta = read_header_meta(lines)
    body = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    counts = np.array([int(ln.split("\t")[1]) for ln in body], dtype=np.int64)
    return TimeSeries(str(meta["owner"]), int(meta["t_win"]), int(meta["start"]), counts)


def write_scaling_tsv(result: ScalingResult, path: str | Path, extra: dict | None = None) -> None:
    meta = {"mu": result.mu, "c": result.c, "residual": result.fit.residual,
            "n_points": len(result.points), "n_excluded": len(result.excluded)}
    meta.update(extra or {})
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v!r}\n" if isinstance(v, float) else f"# {k}={v}\n")
        fh.write("owner\tmean\tsigma\n")
        for p in result.points:
            fh.write(f"{p.owner}\t{p.mean!r}\t{p.sigma!r}\n")


def read_scaling_tsv(path: str | Path) -> tuple[dict, list[ScalingPoint]]:
    lines = Path(path).read_text().splitlines()
    meta = read_header_meta(lines)
    body = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    pts = []
    for ln in body:
        o, m, s = ln.split("\t")
        pts.append(ScalingPoint(o, float(m), float(s)))
    return meta, pts


def write_spectrum_tsv(ps: PowerSpectrum, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# owner={ps.owner}\n")
        fh.write("frequency\tpower\n")
        for f, p in zip(ps.frequency, ps.power):
            fh.write(f"{float(f)!r}\t{float(p)!r}\n")


def read_spectrum_tsv(path: str | Path) -> PowerSpectrum:
    lines = Path(path).read_text().splitlines()
    meta = read_header_meta(lines)
    body = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    arr = np.array([[float(v) for v in ln.split("\t")] for ln in body]).reshape(-1, 2)
    return PowerSpectrum(str(meta.get("owner", "")), arr[:, 0], arr[:, 1])


def write_event_times(log: EventLog, owners: Sequence[str], path: str | Path) -> None:
    """Raw ``owner ts`` pairs, e.g. for drawing an activity bar code."""
    with open(path, "w") as fh:
        fh.write("owner\tts\n")
        for o in owners:
            for ev in log.user_events(o):
                fh.write(f"{o}\t{ev.ts}\n")


def read_event_times(path: str | Path) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for line in Path(path).read_text().splitlines()[1:]:
        if line:
            o, ts = line.split("\t")
            out.setdefault(o, []).append(int(ts))
    return out
