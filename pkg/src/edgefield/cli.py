"""Command-line interface tying the pipeline stages together.

Subcommands: ``graph build``, ``prior simulate``, ``study synth``,
``study replicate``, ``fit``, ``compare``, ``render``. Every randomized
command requires ``--seed`` and is bit-reproducible. Exit codes: 0 success,
2 validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import criteria as crit
from . import io_formats as iof
from .graph import build_line_graph, graph_summary, load_edge_list
from .hmc import SamplerConfig, run_chains
from .model import ModelSpec, load_dataset
from .priors import CarPrior, RenegePrior, RenegeSkPrior, simulate_field
from .render import render_field
from .synth import Scenario, make_dataset, run_replication

_MODEL_NAMES = {"car": "car", "renege": "renege", "renege-sk": "renege_sk"}


class ValidationError(Exception):
    pass


def _progress(msg: str, quiet: bool) -> None:
    if not quiet:
        print(msg, file=sys.stderr)


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_graph_build(args) -> int:
    g = load_edge_list(args.edges)
    lg = build_line_graph(g)
    report = graph_summary(g, lg)
    if args.out:
        out = _outdir(args.out)
        (out / "graph_summary.txt").write_text(report, encoding="utf-8")
        _progress(f"wrote {out / 'graph_summary.txt'}", args.quiet)
    else:
        sys.stdout.write(report)
    return 0


def _load_eta(args, p: int) -> np.ndarray:
    if args.eta_csv:
        vals = np.loadtxt(args.eta_csv, delimiter=",", ndmin=1)
        if vals.size != p:
            raise ValidationError(f"eta file has {vals.size} values, expected {p}")
        return vals.astype(np.float64)
    return np.full(p, args.eta_const)


def _cmd_prior_simulate(args) -> int:
    if args.draws < 1:
        raise ValidationError("draws must be >= 1")
    g = load_edge_list(args.edges)
    model = _MODEL_NAMES[args.model]
    if model == "car":
        prior = CarPrior(varsigma=args.gamma, tau2=args.sigma2)
        lg = None
    else:
        lg = build_line_graph(g)
        if model == "renege":
            prior = RenegePrior(gamma=args.gamma, sigma_theta2=args.sigma2)
        else:
            prior = RenegeSkPrior(gamma=args.gamma, sigma_theta2=args.sigma2,
                                  eta=_load_eta(args, g.p))
    draws = simulate_field(prior, g, lg, n_draws=args.draws, seed=args.seed)
    out = _outdir(args.out)
    iof.write_field_draws(out / "field_draws.csv", draws)
    _progress(f"wrote {out / 'field_draws.csv'}", args.quiet)
    return 0


def _cmd_study_synth(args) -> int:
    scenario = Scenario(rows=args.rows, cols=args.cols, gradient=args.gradient,
                        band_y=args.band_y, eta_scale=args.eta_scale,
                        true_alpha=args.alpha, gamma=args.gamma,
                        sigma_theta2=args.sigma2, expected_counts=args.expected)
    synth, g, lg = make_dataset(scenario, args.seed)
    out = _outdir(args.out)
    iof.write_edge_list(out / "edges.csv", g)
    iof.write_dataset(out / "data.csv", synth.data)
    iof.write_coords(out / "coords.csv", synth.coords)
    iof.write_scenario(out / "scenario.txt", scenario)
    with open(out / "truth.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,theta_true\n")
        for i, v in enumerate(synth.theta_true):
            fh.write(f"{i},{v!r}\n")
    _progress(f"wrote dataset for seed {args.seed} to {out}", args.quiet)
    return 0


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(chains=args.chains, warmup=args.warmup,
                         samples=args.samples, seed=args.seed,
                         target_accept=args.target_accept,
                         max_leapfrog=args.max_leapfrog)


def _cmd_study_replicate(args) -> int:
    scenario = iof.load_scenario(args.scenario)
    models = [_MODEL_NAMES[m.strip()] for m in args.models.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not models or not seeds:
        raise ValidationError("need at least one model and one seed")
    cfg = _sampler_config(args)
    out = _outdir(args.out)

    def progress(seed, per_model):
        _progress(f"seed {seed}: " + ", ".join(
            "failed" if t is None else f"{t.model} WAIC={t.WAIC:.2f}"
            for t in per_model), args.quiet)

    tables, wins = run_replication(scenario, models, seeds, cfg,
                                   skew_rank=args.skew_rank, progress=progress)
    for seed, per_model in zip(seeds, tables):
        ok = [t for t in per_model if t is not None]
        iof.write_criteria(out / f"criteria_seed{seed}.csv", ok)
    with open(out / "wins.txt", "w", encoding="utf-8", newline="\n") as fh:
        for c, per_model in wins.items():
            for m, count in per_model.items():
                fh.write(f"{c},{m},{count}\n")
    _progress(f"wrote per-seed criteria and win counts to {out}", args.quiet)
    return 0


def _cmd_fit(args) -> int:
    g = load_edge_list(args.graph)
    model = _MODEL_NAMES[args.model]
    lg = build_line_graph(g) if model != "car" else None
    data = load_dataset(args.data, n=g.n)
    spec = ModelSpec(variant=model, skew_rank=args.skew_rank)
    cfg = _sampler_config(args)
    draws, diag = run_chains(data, g, lg, spec, cfg)
    out = _outdir(args.out)
    iof.write_posterior_draws(out / "draws.csv", draws)
    (out / "diagnostics.txt").write_text(diag.report(), encoding="utf-8")
    table = crit.criteria_for_fit(model, draws, data)
    iof.write_criteria(out / "criteria.csv", [table])
    _progress(f"wrote draws, diagnostics, criteria to {out}", args.quiet)
    return 0


def _cmd_compare(args) -> int:
    tables = []
    for path in args.criteria:
        tables.extend(iof.load_criteria(path))
    if not tables:
        raise ValidationError("no criteria rows found")
    sys.stdout.write(crit.compare(tables))
    return 0


def _cmd_render(args) -> int:
    coords = iof.load_coords(args.coords)
    field = np.loadtxt(args.field, delimiter=",", ndmin=1)
    edges = None
    edge_values = None
    if args.edges:
        edges = load_edge_list(args.edges).edges
        if args.edge_values:
            edge_values = np.loadtxt(args.edge_values, delimiter=",", ndmin=1)
    svg = render_field(field, coords, edges=edges, edge_values=edge_values,
                       node_radius=args.node_radius)
    Path(args.out).write_text(svg, encoding="utf-8")
    _progress(f"wrote {args.out}", args.quiet)
    return 0


def _add_common(p, seed_required=True):
    if seed_required:
        p.add_argument("--seed", type=int, required=True, help="64-bit RNG seed")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _add_sampler_flags(p):
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-leapfrog", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgefield",
                                     description="edge-based spatial priors for areal count data")
    sub = parser.add_subparsers(dest="command", required=True)

    p_graph = sub.add_parser("graph", help="graph utilities")
    graph_sub = p_graph.add_subparsers(dest="subcommand", required=True)
    pg = graph_sub.add_parser("build", help="validate an edge list and report structure")
    pg.add_argument("--edges", required=True)
    pg.add_argument("--out", default=None)
    _add_common(pg, seed_required=False)
    pg.set_defaults(func=_cmd_graph_build)

    p_prior = sub.add_parser("prior", help="prior simulation")
    prior_sub = p_prior.add_subparsers(dest="subcommand", required=True)
    ps = prior_sub.add_parser("simulate", help="draw fields from a prior")
    ps.add_argument("--model", choices=sorted(_MODEL_NAMES), required=True)
    ps.add_argument("--edges", required=True)
    ps.add_argument("--gamma", type=float, required=True,
                    help="dependence parameter (varsigma for car)")
    ps.add_argument("--sigma2", type=float, required=True,
                    help="scale parameter (tau2 for car)")
    ps.add_argument("--eta-csv", default=None, help="per-edge skew values, canonical order")
    ps.add_argument("--eta-const", type=float, default=0.0)
    ps.add_argument("--draws", type=int, required=True)
    ps.add_argument("--out", required=True)
    _add_common(ps)
    ps.set_defaults(func=_cmd_prior_simulate)

    p_study = sub.add_parser("study", help="synthetic experiments")
    study_sub = p_study.add_subparsers(dest="subcommand", required=True)
    st = study_sub.add_parser("synth", help="generate a gradient-plus-skew-band dataset")
    st.add_argument("--rows", type=int, default=12)
    st.add_argument("--cols", type=int, default=13)
    st.add_argument("--gradient", type=float, default=1.0)
    st.add_argument("--band-y", type=float, default=0.5)
    st.add_argument("--eta-scale", type=float, default=3.0)
    st.add_argument("--alpha", type=float, default=0.5)
    st.add_argument("--gamma", type=float, default=0.7)
    st.add_argument("--sigma2", type=float, default=0.25)
    st.add_argument("--expected", type=float, default=50.0)
    st.add_argument("--out", required=True)
    _add_common(st)
    st.set_defaults(func=_cmd_study_synth)

    sr = study_sub.add_parser("replicate", help="fit models across seeds and tabulate criteria")
    sr.add_argument("--scenario", required=True)
    sr.add_argument("--models", default="car,renege,renege-sk")
    sr.add_argument("--seeds", required=True, help="comma-separated integer seeds")
    sr.add_argument("--skew-rank", type=int, default=None)
    sr.add_argument("--out", required=True)
    _add_sampler_flags(sr)
    _add_common(sr)
    sr.set_defaults(func=_cmd_study_replicate)

    pf = sub.add_parser("fit", help="fit one model to data")
    pf.add_argument("--model", choices=sorted(_MODEL_NAMES), required=True)
    pf.add_argument("--graph", required=True)
    pf.add_argument("--data", required=True)
    pf.add_argument("--skew-rank", type=int, default=None)
    pf.add_argument("--out", required=True)
    _add_sampler_flags(pf)
    _add_common(pf)
    pf.set_defaults(func=_cmd_fit)

    pc = sub.add_parser("compare", help="render a comparison table from criteria CSVs")
    pc.add_argument("--criteria", action="append", required=True)
    _add_common(pc, seed_required=False)
    pc.set_defaults(func=_cmd_compare)

    pr = sub.add_parser("render", help="emit an SVG map of a node field")
    pr.add_argument("--field", required=True, help="CSV with one value per node")
    pr.add_argument("--coords", required=True)
    pr.add_argument("--edges", default=None)
    pr.add_argument("--edge-values", default=None)
    pr.add_argument("--node-radius", type=float, default=8.0)
    pr.add_argument("--out", required=True)
    _add_common(pr, seed_required=False)
    pr.set_defaults(func=_cmd_render)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
