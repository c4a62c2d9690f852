"""Markdown summary of a run directory, with PNG figures.

Each section reads the artifacts the corresponding subcommand writes.  A
section whose artifacts are missing is listed as absent; the report itself
never fails on an incomplete directory.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .distributions import read_distribution_tsv, read_header_meta  # noqa: E402
from .spectral import read_labels_tsv, read_scatter_tsv  # noqa: E402
from .tempstats import read_scaling_tsv  # noqa: E402
from .tempstats import read_spectrum_tsv as read_power_tsv  # noqa: E402

SECTIONS = ("Degrees", "Intervals", "Scaling", "Response", "Spectrum", "Communities")
SPECTRUM_HEAD = 10


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=80, metadata={"Software": None})
    plt.close(fig)


def _loglog_figure(dists, title: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, d in dists:
        ok = (d.pdf > 0) & (d.centers > 0)
        ax.loglog(d.centers[ok], d.pdf[ok], "o-", ms=3, label=name)
    ax.set_xlabel("x")
    ax.set_ylabel("pdf")
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def _dist_row(name: str, d) -> str:
    exp = d.meta.get("fit.exponent")
    rng = (d.meta.get("fit.x_min"), d.meta.get("fit.x_max"))
    fit = f"{_fmt(exp)} on [{_fmt(rng[0])}, {_fmt(rng[1])}]" if exp is not None else "none"
    return f"| {name} | {d.meta.get('n', '')} | {len(d.pdf)} | {fit} |"


def _degrees(run: Path, figs: Path) -> list[str] | None:
    files = sorted(run.glob("degree_*.tsv"))
    if (run / "commons.tsv").exists():
        files.append(run / "commons.tsv")
    if not files:
        return None
    dists = [(f.stem, read_distribution_tsv(f)) for f in files]
    out = ["| distribution | samples | bins | power-law exponent |", "|---|---|---|---|"]
    out += [_dist_row(n, d) for n, d in dists]
    _loglog_figure(dists, "degrees", figs / "degrees.png")
    out.append("")
    out.append("![degrees](figures/degrees.png)")
    return out


def _intervals(run: Path, figs: Path) -> list[str] | None:
    f = run / "intervals.tsv"
    if not f.exists():
        return None
    d = read_distribution_tsv(f)
    _loglog_figure([("intervals", d)], "inter-event intervals (minutes)", figs / "intervals.png")
    return [
        "| distribution | samples | bins | power-law exponent |", "|---|---|---|---|",
        _dist_row("intervals", d), "", "![intervals](figures/intervals.png)",
    ]


def _scaling(run: Path, figs: Path) -> list[str] | None:
    f = run / "scaling.tsv"
    if not f.exists():
        return None
    meta, pts = read_scaling_tsv(f)
    mean = np.array([p.mean for p in pts])
    sigma = np.array([p.sigma for p in pts])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(mean, sigma, ".", ms=3)
    xs = np.array([mean.min(), mean.max()])
    ax.loglog(xs, meta["c"] * xs ** meta["mu"], "-", label=f"mu={meta['mu']:.3f}")
    ax.set_xlabel("<n>")
    ax.set_ylabel("sigma")
    ax.legend()
    _save(fig, figs / "scaling.png")
    return [
        f"- exponent mu: {_fmt(meta['mu'])}",
        f"- prefactor c: {_fmt(meta['c'])}",
        f"- series used: {meta['n_points']} (excluded: {meta.get('n_excluded', 0)})",
        f"- window: {meta.get('t_win', '?')} minutes",
        "", "![scaling](figures/scaling.png)",
    ]


def _response(run: Path, figs: Path) -> list[str] | None:
    f = run / "response.tsv"
    if not f.exists():
        return None
    d = read_distribution_tsv(f)
    _loglog_figure([("response", d)], "response times (minutes)", figs / "response.png")
    out = [f"- samples: {d.meta.get('n', '')}"]
    if "qexp.q" in d.meta:
        out += [
            f"- q: {_fmt(d.meta['qexp.q'])}",
            f"- t*: {_fmt(d.meta['qexp.t_star'])} minutes",
            f"- tail slope 1/(q-1): {_fmt(d.meta['qexp.tail_slope'])}",
        ]
    else:
        out.append("- q-exponential fit: none")
    if "fit.exponent" in d.meta:
        out.append(f"- power-law exponent: {_fmt(d.meta['fit.exponent'])}")
    out += ["", "![response](figures/response.png)"]
    return out


def _spectrum(run: Path, figs: Path) -> list[str] | None:
    f = run / "spectrum.tsv"
    p = run / "power_spectrum.tsv"
    if not f.exists() and not p.exists():
        return None
    out = []
    if f.exists():
        lines = f.read_text().splitlines()
        meta = read_header_meta(lines)
        rows = [ln.split("\t") for ln in lines if ln and not ln.startswith("#")][1:]
        values = np.array([float(r[1]) for r in rows])
        out += [
            f"- eigenvalues computed: {len(values)}",
            f"- zero eigenvalues: {meta.get('n_zero', '?')}",
            f"- communities from the gap: {meta.get('k', '?')}",
            "",
            "| index | eigenvalue |", "|---|---|",
        ]
        out += [f"| {i} | {v:.6f} |" for i, v in enumerate(values[:SPECTRUM_HEAD], start=1)]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(np.arange(1, len(values) + 1), values, "o")
        ax.set_xlabel("index")
        ax.set_ylabel("eigenvalue")
        _save(fig, figs / "spectrum.png")
        out += ["", "![spectrum](figures/spectrum.png)"]
    else:
        out.append("- Laplacian spectrum: absent")
    if p.exists():
        ps = read_power_tsv(p)
        fig, ax = plt.subplots(figsize=(5, 4))
        ok = ps.power > 0
        ax.loglog(ps.frequency[ok], ps.power[ok], "-", lw=0.8)
        ax.set_xlabel("frequency (1/bin)")
        ax.set_ylabel("power")
        ax.set_title(f"periodogram {ps.owner}")
        _save(fig, figs / "power_spectrum.png")
        out += ["", f"- periodogram of {ps.owner}: {len(ps.frequency)} frequencies",
                "", "![power spectrum](figures/power_spectrum.png)"]
    else:
        out += ["", "- activity periodogram: absent"]
    return out


def _communities(run: Path, figs: Path) -> list[str] | None:
    f = run / "labels.tsv"
    if not f.exists():
        return None
    labels = read_labels_tsv(f)
    sizes = Counter(labels.values())
    out = [f"- nodes: {len(labels)}", f"- unclassified (central ring): {sizes.pop(0, 0)}", "",
           "| community | size |", "|---|---|"]
    out += [f"| {lab} | {sizes[lab]} |" for lab in sorted(sizes)]
    s = run / "scatter.tsv"
    if s.exists():
        _, coords, lab = read_scatter_tsv(s)
        fig, ax = plt.subplots(figsize=(5, 4))
        for c in np.unique(lab):
            m = lab == c
            ax.plot(coords[m, 0], coords[m, 1], ".", ms=3, label=str(c))
        ax.set_xlabel("eigenvector 1")
        ax.set_ylabel("eigenvector 2")
        ax.legend(fontsize=7, title="label")
        _save(fig, figs / "scatter.png")
        out += ["", "![scatter](figures/scatter.png)"]
    return out


BUILDERS = {
    "Degrees": _degrees,
    "Intervals": _intervals,
    "Scaling": _scaling,
    "Response": _response,
    "Spectrum": _spectrum,
    "Communities": _communities,
}


def build_report(run_dir: str | Path, out: str | Path | None = None) -> dict:
    """Write ``report.md`` (and ``figures/``) for a run directory.

    Returns a summary with the report path and the present/absent sections.
    """
    run = Path(run_dir)
    if not run.is_dir():
        raise FileNotFoundError(f"no such directory: {run}")
    out = Path(out) if out is not None else run / "report.md"
    figs = out.parent / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    lines = [f"# Run report: {run.name or run}", ""]
    present, absent = [], []
    for name in SECTIONS:
        body = BUILDERS[name](run, figs)
        lines.append(f"## {name}")
        lines.append("")
        if body is None:
            absent.append(name)
            lines.append("absent")
        else:
            present.append(name)
            lines += body
        lines.append("")
    out.write_text("\n".join(lines))
    return {"report": str(out), "present": present, "absent": absent}
