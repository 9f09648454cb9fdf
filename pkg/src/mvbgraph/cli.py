"""Command line interface: ``mvbgraph {simulate,fit,path,tune,eval}``.

Exit status is 0 on success, 2 when a fit did not converge (outputs are still
written) and 3 on bad input.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    InputError,
    Standardizer,
    model_from_dict,
    model_to_dict,
    read_dataset,
    read_json,
    write_dataset,
    write_json,
    write_table,
)
from .experiments import recovery_table, run_replications
from .mvb import ModelConfig, parse_subset, subset_label
from .optimizer import FitOptions, fit, lambda_path
from .penalty import block_norms, build_groups, recovered_structure
from .simgen import TrueModel, evaluate_recovery, model_spec, simulate
from .tuning import CRITERIA, DEFAULT_GRID_COUNT, DEFAULT_GRID_RATIO, default_grid, tune

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT = 0, 2, 3

log = logging.getLogger("mvbgraph")


def parse_grid(spec, data=None, groups=None):
    """``max:min:count`` (log-spaced, descending) or ``auto[:count[:ratio]]``."""
    parts = spec.split(":")
    try:
        if parts[0] == "auto":
            count = int(parts[1]) if len(parts) > 1 else DEFAULT_GRID_COUNT
            ratio = float(parts[2]) if len(parts) > 2 else DEFAULT_GRID_RATIO
            return default_grid(data, groups, count, ratio)
        hi, lo, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise InputError(f"bad grid spec {spec!r}; expected max:min:count or auto[:count[:ratio]]") from None
    if not (hi >= lo > 0 and count >= 1) or len(parts) != 3:
        raise InputError(f"bad grid spec {spec!r}; need max >= min > 0 and count >= 1")
    return np.geomspace(hi, lo, count) if count > 1 else np.array([hi])


def _prepare(args):
    data = read_dataset(args.data)
    config = ModelConfig(data.K, data.p, args.m)
    scaler = Standardizer.identity(data.p) if args.no_standardize else Standardizer.fit(data.x)
    fitted = Dataset(scaler.transform(data.x), data.y)
    return fitted, config, scaler


def _options(args):
    return FitOptions(tol=args.fit_tol, inner_tol=args.inner_tol, max_outer=args.max_outer)


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_doc(res, config, scaler, **extra):
    return model_to_dict(
        scaler.to_raw(res.coef), config,
        **{"lambda": res.lam, "objective": res.objective, "converged": res.converged,
           "standardization": {"mean": scaler.mean.tolist(), "scale": scaler.scale.tolist()}},
        **extra,
    )


def _edge_rows(C, config, tol):
    st = recovered_structure(C, config, tol)
    norms = block_norms(C, config)
    rows = []
    for s, t in st.edges:
        w = (1 << (s - 1)) | (1 << (t - 1))
        pair_norm = float(norms[config.position[w]]) if w in config.position else 0.0
        rows.append([f"{s},{t}", pair_norm])
    return st, rows


def cmd_simulate(args):
    truth, data = simulate(args.model, args.n, args.seed, p=args.p)
    out = _out(args)
    write_dataset(out / "data.csv", data)
    nonzero = sorted(truth.nonzero, key=lambda w: truth.config.position[w])
    write_json(out / "truth.json", model_to_dict(
        truth.coef, truth.config, model=args.model, seed=args.seed, n=args.n,
        nonzero=[subset_label(w) for w in nonzero]))
    summary = {"K": truth.config.K, "p": truth.config.p, "q": truth.config.q,
               "n": args.n, "nonzero": len(nonzero)}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_fit(args):
    data, config, scaler = _prepare(args)
    groups = build_groups(config)
    c0 = None
    if args.init:
        C0, cfg0 = model_from_dict(read_json(args.init))
        if cfg0 != config:
            raise InputError("warm-start model does not match the dataset's dimensions")
        c0 = scaler.to_standardized(C0)
    res = fit(data, args.lam, opts=_options(args), c0=c0, groups=groups)
    out = _out(args)
    st, edges = _edge_rows(res.coef, config, args.tol)
    write_json(out / "model.json", _model_doc(res, config, scaler))
    write_table(out / "edges.csv", ["edge", "block_norm"], edges)
    norms = block_norms(res.coef, config)
    write_table(out / "blocks.csv", ["subset", "order", "block_norm", "nonzero"],
                [[lab, int(o), float(r), int(r > args.tol)]
                 for lab, o, r in zip(config.labels, config.orders, norms)])
    write_table(out / "trace.csv", ["iteration", "objective"],
                [[k, float(v)] for k, v in enumerate(res.objective_trace)])
    summary = {"lambda": res.lam, "objective": res.objective, "converged": res.converged,
               "outer_iterations": res.n_outer, "edges": [e[0] for e in edges],
               "maximal_cliques": [subset_label(w) for w in st.maximal_cliques]}
    write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("lambda", "converged", "edges")}))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def path_events(fits, config, tol):
    """Entry/exit events of blocks and first entries of edges along a descending path."""
    events, edge_entries = [], []
    live, seen, seen_edges = set(), set(), set()
    for idx, res in enumerate(fits):
        st = recovered_structure(res.coef, config, tol)
        now = set(st.nonzero_subsets)
        for w in sorted(now - live, key=lambda w: config.position[w]):
            kind = "enter" if w not in seen else "reenter"
            events.append([len(events) + 1, kind, subset_label(w), res.lam, idx])
            seen.add(w)
        for w in sorted(live - now, key=lambda w: config.position[w]):
            events.append([len(events) + 1, "exit", subset_label(w), res.lam, idx])
        for e in st.edges:
            if e not in seen_edges:
                seen_edges.add(e)
                edge_entries.append([len(edge_entries) + 1, f"{e[0]},{e[1]}", res.lam, idx])
        live = now
    return events, edge_entries


def cmd_path(args):
    data, config, scaler = _prepare(args)
    groups = build_groups(config)
    grid = parse_grid(args.grid, data, groups)
    fits = lambda_path(data, grid, opts=_options(args), groups=groups)
    out = _out(args)
    rows = []
    for res in fits:
        st = recovered_structure(res.coef, config, args.tol)
        rows.append([res.lam, res.objective, int(res.converged), res.n_outer,
                     len(st.nonzero_subsets), " ".join(st.edge_labels())])
    write_table(out / "path.csv",
                ["lambda", "objective", "converged", "outer_iterations", "active_blocks", "edges"], rows)
    events, edge_entries = path_events(fits, config, args.tol)
    write_table(out / "events.csv", ["order", "event", "subset", "lambda", "grid_index"], events)
    write_table(out / "edge_entries.csv", ["order", "edge", "lambda", "grid_index"], edge_entries)
    converged = all(r.converged for r in fits)
    write_json(out / "summary.json", {
        "grid": [float(v) for v in grid], "converged": converged,
        "edge_entry_order": [e[1] for e in edge_entries]})
    print(json.dumps({"points": len(fits), "edge_entry_order": [e[1] for e in edge_entries]}))
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_tune(args):
    data, config, scaler = _prepare(args)
    groups = build_groups(config)
    grid = parse_grid(args.grid, data, groups)
    res = tune(data, grid, args.criterion, opts=_options(args), groups=groups)
    out = _out(args)
    rows = []
    for f, d in zip(res.fits, res.diagnostics):
        st = recovered_structure(f.coef, config, args.tol)
        rows.append([f.lam, d.obs, d.df, d.gacv, d.bgacv, len(st.nonzero_subsets),
                     " ".join(st.edge_labels())])
    write_table(out / "tuning.csv",
                ["lambda", "obs", "df", "gacv", "bgacv", "active_blocks", "edges"], rows)
    best = res.best_fit
    st, edges = _edge_rows(best.coef, config, args.tol)
    write_json(out / "model.json", _model_doc(best, config, scaler, criterion=res.criterion))
    write_table(out / "edges.csv", ["edge", "block_norm"], edges)
    summary = {"criterion": res.criterion, "best_lambda": res.best_lambda,
               "best_index": res.best_index, "converged": best.converged,
               "edges": [e[0] for e in edges]}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK if best.converged else EXIT_NOT_CONVERGED


def _truth_from_doc(doc):
    C, config = model_from_dict(doc)
    if "nonzero" in doc:
        nonzero = {parse_subset(lab) for lab in doc["nonzero"]}
    else:
        nonzero = {int(w) for w, r in zip(config.masks, block_norms(C, config)) if r > 0}
    return TrueModel(config, nonzero, C)


def cmd_eval(args):
    out = _out(args)
    if args.reps:
        return _eval_replications(args, out)
    if not args.fit or not args.truth:
        raise InputError("eval needs --fit and --truth, or --reps for replication mode")
    C, config = model_from_dict(read_json(args.fit))
    truth = _truth_from_doc(read_json(args.truth))
    try:
        m = evaluate_recovery(C, truth, args.tol, config)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    norms = block_norms(C, config)
    write_table(out / "recovery.csv", ["subset", "order", "in_truth", "recovered", "block_norm"],
                [[lab, int(o), int(int(w) in truth.nonzero), int(m.recovered[int(w)]), float(r)]
                 for lab, o, w, r in zip(config.labels, config.orders, config.masks, norms)])
    summary = {"tp": m.tp, "fp": m.fp, "true_interactions": m.n_true, "tpr": m.tpr,
               "main_effects_recovered": m.main_tp, "main_effects_true": m.main_true}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def _eval_replications(args, out):
    seeds = [args.seed + r for r in range(args.reps)]
    reps = run_replications(args.model, args.n, seeds, workers=args.workers,
                            opts=_options(args), tol=args.tol,
                            standardize=not args.no_standardize)
    skeleton = model_spec(args.model)
    config = skeleton.config
    interactions = skeleton.interactions
    criteria = [args.criterion.upper()] if args.criterion else list(CRITERIA)
    table, counts_rows, summary = [], [], {"reps": args.reps, "model": args.model, "n": args.n}
    for crit in criteria:
        counts, fp = recovery_table(reps, crit, config)
        table.append([crit] + [counts[w] for w in interactions] + [fp])
        counts_rows += [[crit, lab, int(int(w) in skeleton.nonzero), counts[int(w)]]
                        for lab, w in zip(config.labels, config.masks)]
        summary[crit] = {"total_fp": fp,
                         "mean_tpr": float(np.mean([r.metrics[crit].tpr for r in reps])),
                         "mean_lambda": float(np.mean([r.lambdas[crit] for r in reps]))}
    write_table(out / "table.csv", ["criterion"] + [subset_label(w) for w in interactions] + ["FP"], table)
    write_table(out / "counts.csv", ["criterion", "subset", "in_truth", "recovered"], counts_rows)
    write_table(out / "replications.csv", ["seed", "criterion", "lambda", "tp", "fp", "tpr"],
                [[r.seed, c, r.lambdas[c], r.metrics[c].tp, r.metrics[c].fp, r.metrics[c].tpr]
                 for r in reps for c in criteria])
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mvbgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="CSV with y_1..y_K,x_1..x_p columns")
            p.add_argument("--m", type=int, default=None, help="max interaction order")
            p.add_argument("--no-standardize", action="store_true")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--tol", type=float, default=1e-6, help="block-norm recovery threshold")
        p.add_argument("--max-outer", type=int, default=500)
        p.add_argument("--fit-tol", type=float, default=None,
                       help="outer stopping threshold on the decrease (default 1e-8 (1 + |I(c0)|))")
        p.add_argument("--inner-tol", type=float, default=None,
                       help="duality-gap tolerance of the subproblem (default 1e-9 (1 + |I(c0)|))")

    p = sub.add_parser("simulate", help="generate a benchmark dataset and its truth")
    p.add_argument("--model", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=int, default=5, help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit at one penalty level")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--init", help="model file to warm start from")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="warm-started descending penalty path")
    common(p)
    p.add_argument("--grid", default="auto")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("tune", help="select the penalty by GACV or BGACV")
    common(p)
    p.add_argument("--grid", default="auto")
    p.add_argument("--criterion", default="GACV", type=str.upper, choices=CRITERIA)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="score a fit against the truth, or run replications")
    common(p, data=False)
    p.add_argument("--fit", help="model file")
    p.add_argument("--truth", help="truth file written by simulate")
    p.add_argument("--reps", type=int, default=0, help="replication mode: number of runs")
    p.add_argument("--model", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="base seed; run r uses seed + r")
    p.add_argument("--criterion", type=str.upper, choices=CRITERIA, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-standardize", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"mvbgraph: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
