"""Log-binned empirical distributions and their TSV form.

Bins grow geometrically with ratio ``2**(1/4)``.  Integer-valued samples
(degrees, minutes, commons) get integer bin edges so every bin holds a
whole number of support points; the pdf divides the count by the number of
integers in the bin.  A zero sample always lands in the first bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataError

LOG_BIN_RATIO = 2 ** 0.25


def log_bin_edges(samples: np.ndarray, ratio: float = LOG_BIN_RATIO, discrete: bool = False) -> np.ndarray:
    xmax = float(samples.max())
    if discrete:
        start = int(math.floor(samples.min()))
        base = max(start, 1)
        edges = [start]
        if start == 0:
            edges.append(1)
        j = 0
        while edges[-1] <= xmax:
            j += 1
            e = int(math.ceil(base * ratio ** j - 1e-9))
            if e > edges[-1]:
                edges.append(e)
        return np.asarray(edges, dtype=float)
    positive = samples[samples > 0]
    if positive.size == 0:
        raise EmptyDataError("log binning needs at least one positive sample")
    s = float(positive.min())
    nbins = int(math.floor(math.log(xmax / s) / math.log(ratio))) + 1
    edges = s * ratio ** np.arange(nbins + 1)
    while edges[-1] <= xmax:
        edges = np.append(edges, edges[-1] * ratio)
    return edges


@dataclass
class Distribution:
    """Binned pdf/ccdf table, optionally backed by the raw samples.

    ``ccdf[i]`` is the fraction of samples that fall in bin ``i`` or later,
    i.e. ``P(X >= edges[i])`` for samples at or above the first edge.
    """

    edges: np.ndarray
    pdf: np.ndarray
    ccdf: np.ndarray
    discrete: bool = False
    samples: np.ndarray | None = None
    counts: np.ndarray | None = None
    name: str = ""
    cumulative: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_samples(
        cls,
        samples,
        ratio: float = LOG_BIN_RATIO,
        discrete: bool | None = None,
        name: str = "",
        cumulative: bool = False,
    ) -> "Distribution":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise EmptyDataError(f"no samples for distribution {name or '(unnamed)'}")
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite and non-negative")
        if discrete is None:
            discrete = bool(np.all(x == np.round(x)))
        edges = log_bin_edges(x, ratio, discrete)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)
        counts = np.bincount(idx, minlength=len(edges) - 1).astype(float)
        widths = np.diff(edges)
        pdf = counts / (x.size * widths)
        ccdf = np.cumsum(counts[::-1])[::-1] / x.size
        return cls(
            edges=edges, pdf=pdf, ccdf=ccdf, discrete=discrete, samples=x, counts=counts,
            name=name, cumulative=cumulative, meta={"ratio": ratio},
        )

    @classmethod
    def from_table(cls, lo, hi, pdf, ccdf=None, discrete: bool = False, name: str = "") -> "Distribution":
        """Build a distribution from contiguous bins given explicitly."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if not np.allclose(lo[1:], hi[:-1]):
            raise ValueError("bins must be contiguous")
        pdf = np.asarray(pdf, dtype=float)
        if ccdf is None:
            mass = pdf * (hi - lo)
            ccdf = np.cumsum(mass[::-1])[::-1] / mass.sum()
        edges = np.append(lo, hi[-1])
        return cls(edges=edges, pdf=pdf, ccdf=np.asarray(ccdf, dtype=float), discrete=discrete, name=name)

    @property
    def lo(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def hi(self) -> np.ndarray:
        return self.edges[1:]

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin centres; bins starting at zero get centre 0."""
        top = self.hi - 1 if self.discrete else self.hi
        return np.sqrt(self.lo * np.maximum(top, self.lo))

    @property
    def n(self) -> int:
        if self.samples is not None:
            return int(self.samples.size)
        return int(self.meta.get("n", 0))

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact (unbinned) probability of each distinct sample value."""
        if self.samples is None:
            raise ValueError("distribution has no raw samples")
        values, counts = np.unique(self.samples, return_counts=True)
        return values, counts / self.samples.size

    def percentile(self, q: float) -> float:
        if self.samples is None:
            raise ValueError("distribution has no raw samples")
        return float(np.percentile(self.samples, q))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def write_distribution_tsv(d: Distribution, path: str | Path, extra: dict | None = None) -> None:
    """Write ``bin_lo bin_hi pdf ccdf`` rows under ``# key=value`` header lines."""
    meta = {"name": d.name, "scheme": "discrete" if d.discrete else "continuous", "n": d.n}
    meta.update(d.meta)
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={_fmt(v)}\n")
        fh.write("bin_lo\tbin_hi\tpdf\tccdf\n")
        for lo, hi, p, c in zip(d.lo, d.hi, d.pdf, d.ccdf):
            fh.write(f"{_fmt(lo)}\t{_fmt(hi)}\t{float(p)!r}\t{float(c)!r}\n")


def read_header_meta(lines) -> dict:
    meta = {}
    for line in lines:
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        meta[key] = _parse_scalar(value)
    return meta


def _parse_scalar(value: str):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def read_distribution_tsv(path: str | Path) -> Distribution:
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = read_header_meta(lines)
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body or body[0].split("\t") != ["bin_lo", "bin_hi", "pdf", "ccdf"]:
        raise ValueError(f"{path}: not a distribution table")
    rows = np.array([[float(v) for v in ln.split("\t")] for ln in body[1:]], dtype=float).reshape(-1, 4)
    d = Distribution.from_table(
        rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3],
        discrete=meta.get("scheme") == "discrete", name=str(meta.get("name", "")),
    )
    d.meta = {k: v for k, v in meta.items() if k not in ("name", "scheme")}
    return d
