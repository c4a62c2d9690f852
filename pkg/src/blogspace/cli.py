"""Command-line front end.

Every subcommand prints one line of JSON (sorted keys) on stdout and exits
0; operation errors print ``error: <message>`` on stderr and exit 1; usage
errors exit 2.  ``--config FILE`` supplies ``key=value`` defaults for the
chosen subcommand, and explicit flags override them.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bigraph, spectral, synthgen, tempstats
from .distributions import Distribution, write_distribution_tsv
from .errors import BlogspaceError, EmptyDataError, FitError
from .ingest import filter_events, read_event_log, require_nonempty, validate_log, write_event_log
from .report import build_report

# flags that must be present after the config file is merged
REQUIRED = {
    "ingest-validate": ["input"],
    "net-build": ["input", "output"],
    "stats-intervals": ["input", "output"],
    "stats-activity": ["input", "output"],
    "stats-scaling": ["input", "output"],
    "stats-spectrum": ["input", "output"],
    "stats-response": ["input", "output"],
    "communities": ["input", "output"],
    "synth": ["output"],
    "report": ["dir"],
}


class UsageError(Exception):
    pass


# -- argument parsing ---------------------------------------------------------

def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("-i", "--input", help="event log (.jsonl or .tsv)")
    p.add_argument("--format", choices=["jsonl", "tsv"], help="override format detection")
    p.add_argument("--lenient", action="store_true", help="drop unresolvable comments instead of failing")
    p.add_argument("--min-comments", type=int, help="keep posts with at least this many comments")
    p.add_argument("--max-comments", type=int, help="keep posts with at most this many comments")
    p.add_argument("--start", type=int, help="drop events before this minute")
    p.add_argument("--end", type=int, help="drop events at or after this minute")


def _add_output_dir(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", help="output directory (created if missing)")


def _add_fit_range(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fit-min", type=float, help="lower end of the power-law fit range")
    p.add_argument("--fit-max", type=float, help="upper end of the power-law fit range")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blogspace", description="Blog event-log network and timing analysis.")
    parser.add_argument("--config", help="key=value file with defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("ingest-validate", help="parse and validate an event log")
    _add_input(p)
    p.add_argument("-o", "--output", help="write the (filtered, cleaned) log here in canonical form")

    p = sub.add_parser("net-build", help="bipartite network, projections and degree distributions")
    _add_input(p)
    _add_output_dir(p)
    p.add_argument("--flatten", action="store_true", help="attribute comments to their root post")
    p.add_argument("--post-threshold", type=int, default=100,
                   help="user x post graph keeps posts with more comments than this")
    _add_fit_range(p)

    p = sub.add_parser("stats-intervals", help="inter-event interval distribution")
    _add_input(p)
    _add_output_dir(p)
    _add_fit_range(p)
    p.add_argument("--top", type=int, default=10, help="export raw event times of the N most active users")

    p = sub.add_parser("stats-activity", help="binned activity series of one user or post")
    _add_input(p)
    _add_output_dir(p)
    p.add_argument("--owner", help="user or post id (default: most active user)")
    p.add_argument("--kind", choices=["user", "post"])
    p.add_argument("--twin", type=int, help="window length in minutes")

    p = sub.add_parser("stats-scaling", help="fluctuation scaling sigma = c <n>^mu")
    _add_input(p)
    _add_output_dir(p)
    p.add_argument("--kind", choices=["user", "post"], default="user")
    p.add_argument("--twin", type=int, help="window length in minutes")
    p.add_argument("--min-points", type=int, default=10)

    p = sub.add_parser("stats-spectrum", help="periodogram of an activity series")
    _add_input(p)
    _add_output_dir(p)
    p.add_argument("--owner", help="user or post id (default: most active user)")
    p.add_argument("--kind", choices=["user", "post"])
    p.add_argument("--twin", type=int, help="window length in minutes")

    p = sub.add_parser("stats-response", help="response-time distribution and q-exponential fit")
    _add_input(p)
    _add_output_dir(p)
    _add_fit_range(p)
    p.add_argument("--min-samples", type=int, default=1000, help="minimum samples for the q-exponential fit")

    p = sub.add_parser("communities", help="spectral community detection")
    _add_input(p)
    _add_output_dir(p)
    p.add_argument("--graph", choices=["users", "user-post"], default="users",
                   help="commons projection or the weighted user x post graph")
    p.add_argument("--flatten", action="store_true")
    p.add_argument("--post-threshold", type=int, default=100)
    p.add_argument("--k", type=int, help="skip gap detection and use this many communities")
    p.add_argument("--m-scan", type=int, default=10, help="eigenvalues scanned for the gap")
    p.add_argument("--dims", type=int, choices=[2, 3], default=3)
    p.add_argument("--eps-ring", type=float, default=spectral.RING_EPS)
    p.add_argument("--method", choices=["auto", "dense", "lanczos"], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="ground-truth TSV; adds NMI against planted groups")
    p.add_argument("--write-laplacian", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic log with planted groups")
    p.add_argument("-o", "--output", help="log file to write (JSON lines)")
    p.add_argument("--truth", help="ground-truth TSV (default: <output stem>.truth.tsv)")
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--users", type=int, help="total users, a multiple of --groups (default 100 per group)")
    p.add_argument("--posts", type=int, default=100, help="posts per group")
    p.add_argument("--p-in", type=float, default=0.95)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--sampler", choices=["pareto", "exponential"], default="pareto")
    p.add_argument("--alpha", type=float, default=1.5, help="Pareto gap exponent")
    p.add_argument("--xmin", type=float, default=1.0, help="Pareto minimum gap (minutes)")
    p.add_argument("--rate", type=float, default=0.01, help="exponential events per minute")
    p.add_argument("--spread", type=float, default=0.0, help="decades of per-user time-scale spread")
    p.add_argument("--q", type=float, default=1.55)
    p.add_argument("--t-star", type=float, default=60.0)
    p.add_argument("--popularity", type=float, help="Pareto index of post attractiveness")
    p.add_argument("--reply-prob", type=float, default=0.2)
    p.add_argument("--horizon", type=int, default=43200, help="minutes")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="markdown report with figures for a run directory")
    p.add_argument("-d", "--dir", help="run directory")
    p.add_argument("-o", "--output", help="report path (default: <dir>/report.md)")
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = _read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config: {exc}")
        except UsageError as exc:
            parser.error(str(exc))
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in subparser._actions}
        defaults = {}
        for key, raw in cfg.items():
            act = actions.get(key)
            if act is None or key == "help":
                parser.error(f"config key {key!r} is not an option of {args.command}")
            if isinstance(act, argparse._StoreTrueAction):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    parser.error(f"config key {key!r} expects a boolean")
                defaults[key] = raw.lower() in ("true", "1", "yes")
                continue
            try:
                value = act.type(raw) if act.type else raw
            except ValueError:
                parser.error(f"config key {key!r}: invalid value {raw!r}")
            if act.choices is not None and value not in act.choices:
                parser.error(f"config key {key!r}: {raw!r} not in {list(act.choices)}")
            defaults[key] = value
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, "")]
    if missing:
        parser.error(f"{args.command}: missing " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


# -- helpers --------------------------------------------------------------------

def _filtered(log, args):
    bounds = (args.min_comments, args.max_comments, args.start, args.end)
    if all(v is None for v in bounds):
        return log
    window = None if args.start is None and args.end is None else (args.start, args.end)
    return require_nonempty(filter_events(log, args.min_comments, args.max_comments, window))


def _load(args):
    log = require_nonempty(read_event_log(args.input, args.format, args.lenient))
    return _filtered(log, args)


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_range(args):
    if args.fit_min is None and args.fit_max is None:
        return None
    if args.fit_min is None or args.fit_max is None:
        raise ValueError("--fit-min and --fit-max go together")
    return (args.fit_min, args.fit_max)


def _write_dist(d: Distribution, path: Path, x_range=None, extra: dict | None = None) -> dict:
    """Write a distribution with its power-law fit in the header; return the fit fields."""
    meta = dict(extra or {})
    try:
        fit = tempstats.fit_powerlaw(d, x_range)
        meta.update(fit.as_dict())
    except (FitError, ValueError):
        fit = None
    write_distribution_tsv(d, path, meta)
    return {"exponent": fit.exponent if fit else None, "path": str(path)}


def _most_active(log, kind: str | None) -> str:
    if kind == "post":
        counts = log.comment_counts()
        return min(counts, key=lambda p: (-counts[p], p))
    return min(log.by_user, key=lambda u: (-len(log.by_user[u]), u))


def _clean(obj):
    """Make floats JSON-safe (inf/nan become strings)."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


# -- subcommands ----------------------------------------------------------------

def cmd_ingest_validate(args) -> dict:
    log = require_nonempty(read_event_log(args.input, args.format, args.lenient))
    raw = len(log)
    log = _filtered(log, args)
    report = validate_log(log)
    out = {
        "events": len(log), "users": log.n_users, "posts": log.n_posts, "comments": log.n_comments,
        "out_of_order": log.source_out_of_order, "valid": report.ok, "filtered_out": raw - len(log),
    }
    if args.output:
        with open(args.output, "w") as fh:
            write_event_log(log, fh, "tsv" if args.output.endswith(".tsv") else "jsonl")
        out["output"] = args.output
    return out


def cmd_net_build(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    mode = bigraph.Mode.FLATTEN_TO_POST if args.flatten else bigraph.Mode.COMMENT_TREE
    g = bigraph.build_bipartite(log, mode)
    bigraph.write_bipartite(g, out / "bipartite.txt")
    x_range = _fit_range(args)
    fits = {}
    parts = [("users", "out"), ("users", "in"), ("posts", "out"), ("content", "in")]
    if mode is bigraph.Mode.COMMENT_TREE and log.n_comments:
        parts.insert(3, ("comments", "out"))
    for part, direction in parts:
        deg = g.degrees(part, direction)
        if deg.size == 0:
            continue
        d = Distribution.from_samples(deg, discrete=True, name=f"degree_{part}_{direction}")
        fits[d.name] = _write_dist(d, out / f"{d.name}.tsv", x_range)
    c = bigraph.commons_matrix(g)
    summary = {"mode": mode.value, "users": len(g.users), "content": len(g.content), "edges": g.n_edges,
               "bipartite": str(out / "bipartite.txt")}
    try:
        fits["commons"] = _write_dist(bigraph.commons_distribution(c), out / "commons.tsv", x_range)
    except EmptyDataError:
        pass
    ug = bigraph.project_user_graph(c)
    bigraph.write_user_graph(ug, out / "user_graph.txt")
    summary["user_graph"] = str(out / "user_graph.txt")
    summary["user_graph_edges"] = int(ug.adjacency.nnz // 2)
    try:
        upg = bigraph.build_user_post_weighted(log, args.post_threshold)
        bigraph.write_user_post_graph(upg, out / "user_post.txt")
        summary["user_post"] = str(out / "user_post.txt")
        summary["user_post_weight"] = upg.total_weight
    except EmptyDataError:
        summary["user_post"] = None
    summary["distributions"] = fits
    return summary


def cmd_stats_intervals(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    d = tempstats.interevent_distribution(log)
    fit = _write_dist(d, out / "intervals.tsv", _fit_range(args))
    users = sorted(log.by_user, key=lambda u: (-len(log.by_user[u]), u))[: max(args.top, 0)]
    tempstats.write_event_times(log, users, out / "event_times.tsv")
    return {"samples": d.n, "exponent": fit["exponent"], "intervals": fit["path"],
            "event_times": str(out / "event_times.tsv")}


def cmd_stats_activity(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    owner = args.owner or _most_active(log, args.kind)
    ts = tempstats.activity_series(log, owner, args.twin, args.kind)
    path = out / f"series_{owner}.tsv"
    tempstats.write_series_tsv(ts, path)
    c = ts.counts.astype(float)
    return {"owner": owner, "t_win": ts.t_win, "bins": len(ts), "mean": float(c.mean()),
            "sigma": float(c.std()), "series": str(path)}


def cmd_stats_scaling(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    t_win = args.twin or (tempstats.USER_WINDOW if args.kind == "user" else tempstats.POST_WINDOW)
    series = tempstats.all_activity_series(log, t_win, args.kind)
    res = tempstats.fluctuation_scaling(series, args.min_points)
    path = out / "scaling.tsv"
    tempstats.write_scaling_tsv(res, path, {"t_win": t_win, "kind": args.kind})
    return {"mu": res.mu, "c": res.c, "points": len(res.points), "excluded": len(res.excluded),
            "t_win": t_win, "scaling": str(path)}


def cmd_stats_spectrum(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    owner = args.owner or _most_active(log, args.kind)
    ts = tempstats.activity_series(log, owner, args.twin, args.kind)
    ps = tempstats.power_spectrum(ts)
    path = out / "power_spectrum.tsv"
    tempstats.write_spectrum_tsv(ps, path)
    return {"owner": owner, "t_win": ts.t_win, "bins": len(ts), "frequencies": len(ps.frequency),
            "variance": float(ps.power.sum()), "power_spectrum": str(path)}


def cmd_stats_response(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    samples = tempstats.response_time_samples(log)
    d = Distribution.from_samples(samples, discrete=True, name="response")
    summary = {"samples": int(samples.size)}
    extra = {}
    try:
        q = tempstats.fit_qexp(samples, min_samples=args.min_samples)
        extra.update(q.as_dict())
        summary.update({"q": q.q, "t_star": q.t_star, "tail_slope": q.tail_slope})
    except (FitError, EmptyDataError) as exc:
        summary["qexp_error"] = str(exc)
    fit = _write_dist(d, out / "response.tsv", _fit_range(args), extra)
    summary.update({"exponent": fit["exponent"], "response": fit["path"]})
    return summary


def cmd_communities(args) -> dict:
    log = _load(args)
    out = _outdir(args)
    if args.graph == "users":
        mode = bigraph.Mode.FLATTEN_TO_POST if args.flatten else bigraph.Mode.COMMENT_TREE
        graph = bigraph.project_user_graph(bigraph.commons_matrix(bigraph.build_bipartite(log, mode)))
    else:
        graph = bigraph.build_user_post_weighted(log, args.post_threshold)
    lap = spectral.normalized_laplacian(graph)
    if args.write_laplacian:
        spectral.write_laplacian(lap, out / "laplacian.txt")
    n_comp, _ = lap.components()
    if args.k is not None and args.k < 1:
        raise ValueError("--k must be positive")
    want = max(args.m_scan, (args.k or 0), n_comp + args.dims)
    if args.k is not None:
        want = max(want, args.k + args.dims)
    want = min(want, lap.n)
    spec = spectral.smallest_eigenpairs(lap, want, seed=args.seed, method=args.method)
    scan = spectral.scan_gaps(spec.values, min(args.m_scan, spec.k)) if spec.k >= 3 else None
    k = args.k if args.k is not None else (scan.k if scan else 1)
    if k >= 2:
        assign = spectral.assign_branches(spec, k, args.eps_ring)
    else:
        assign = spectral.CommunityAssignment(list(spec.nodes), np.ones(len(spec.nodes), dtype=np.int64), 1,
                                              np.zeros(len(spec.nodes)))
    spectral.write_spectrum_tsv(spec, out / "spectrum.tsv", {"k": k, "n_zero": spec.n_zero})
    spectral.write_labels_tsv(assign, out / "labels.tsv")
    summary = {
        "graph": args.graph, "nodes": lap.n, "isolated_removed": len(lap.removed), "components": n_comp,
        "k": k, "k_nonzero": k - spec.n_zero if k >= spec.n_zero else 0, "n_zero": spec.n_zero,
        "sizes": [assign.sizes()[lab] for lab in range(1, k + 1)], "unclassified": assign.n_unclassified,
        "eigenvalues": [float(v) for v in spec.values[: min(spec.k, args.m_scan)]],
        "spectrum": str(out / "spectrum.tsv"), "labels": str(out / "labels.tsv"),
    }
    try:
        spectral.write_scatter_tsv(spectral.scatter_export(spec, args.dims, assign), out / "scatter.tsv")
        summary["scatter"] = str(out / "scatter.tsv")
    except ValueError as exc:
        summary["scatter"] = None
        summary["scatter_error"] = str(exc)
    if args.truth:
        users, _ = synthgen.read_truth_tsv(args.truth)
        names = [n.split(":", 1)[1] if n.startswith("user:") else n for n in assign.nodes]
        keep = [i for i, n in enumerate(names) if n in users]
        if keep:
            summary["nmi"] = spectral.nmi(assign.labels[keep], [users[names[i]] for i in keep])
    return summary


def cmd_synth(args) -> dict:
    if args.users is not None:
        if args.users % args.groups:
            raise ValueError(f"--users ({args.users}) must be a multiple of --groups ({args.groups})")
        per_group = args.users // args.groups
    else:
        per_group = 100
    sampler = (synthgen.Pareto(args.alpha, args.xmin) if args.sampler == "pareto"
               else synthgen.Exponential(args.rate))
    cfg = synthgen.SynthConfig(
        n_groups=args.groups, users_per_group=per_group, posts_per_group=args.posts,
        p_in=args.p_in, p_out=args.p_out, interevent=sampler, activity_spread=args.spread,
        response=tempstats.QExpFit(args.q, args.t_star, 1.0), popularity_shape=args.popularity,
        reply_prob=args.reply_prob, horizon=args.horizon, seed=args.seed,
    )
    log, truth = synthgen.generate(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.tsv")
    synthgen.write_synth(log, truth, out, truth_path)
    return {"events": len(log), "users": log.n_users, "posts": log.n_posts, "comments": log.n_comments,
            "groups": cfg.n_groups, "seed": cfg.seed, "output": str(out), "truth": str(truth_path)}


def cmd_report(args) -> dict:
    return build_report(args.dir, args.output)


COMMANDS = {
    "ingest-validate": cmd_ingest_validate,
    "net-build": cmd_net_build,
    "stats-intervals": cmd_stats_intervals,
    "stats-activity": cmd_stats_activity,
    "stats-scaling": cmd_stats_scaling,
    "stats-spectrum": cmd_stats_spectrum,
    "stats-response": cmd_stats_response,
    "communities": cmd_communities,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        summary = COMMANDS[args.command](args)
    except (BlogspaceError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
