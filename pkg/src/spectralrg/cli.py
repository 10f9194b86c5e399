"""Command-line interface.

Subcommands cover the full pipeline: generate a model, sample it, compute
empirical moments, build thresholds, learn a tree, evaluate against the
truth, run single quartet tests, print diagnostics, and sweep sample sizes.

Exit codes: 0 success, 1 reconstruction failure, 2 input error, 3 internal
defect (invariant violation).
"""

from __future__ import annotations

import argparse
import json
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from .compare import LabelMismatchError, compare_trees
from .diagnostics import check_conditions, model_diagnostics
from .harness import RunConfig, build_thresholds, log_grid, sweep, tune_global_delta
from .models import (
    ConditionMargins,
    attach_parameters,
    load_model,
    model_to_document,
    sample,
)
from .moments import MomentProvider, empirical_moments
from .quartet import QuartetInput, spectral_quartet_test
from .samples import SampleFormatError, read_samples, write_samples
from .srg import DefectError, ThresholdTable, spectral_recursive_grouping
from .trees import generate_tree, load_tree, to_newick, tree_to_document

EXIT_OK = 0
EXIT_RECONSTRUCTION_FAILURE = 1
EXIT_INPUT_ERROR = 2
EXIT_DEFECT = 3


class InputError(ValueError):
    pass


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_model(path: str):
    try:
        return load_model(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_batch(path: str):
    try:
        return read_samples(path)
    except (OSError, SampleFormatError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _pair_key(x: str, y: str) -> str:
    return "|".join(sorted((x, y)))


def _moments_document(provider: MomentProvider, n_samples) -> dict:
    pairs = {}
    for x, y in combinations(provider.labels, 2):
        a, b = sorted((x, y))
        pairs[_pair_key(a, b)] = provider.moment(a, b).tolist()
    return {
        "format": "moment-table",
        "version": 1,
        "labels": list(provider.labels),
        "n_samples": n_samples,
        "pairs": pairs,
    }


def _provider_from_moments_doc(doc: dict) -> MomentProvider:
    if doc.get("format") != "moment-table":
        raise InputError(f"not a moment-table document: format={doc.get('format')!r}")
    labels = tuple(doc["labels"])
    mats = {key: np.asarray(m, dtype=float) for key, m in doc["pairs"].items()}

    def moment(x, y):
        a, b = sorted((x, y))
        m = mats[_pair_key(a, b)]
        return m if (x, y) == (a, b) else m.T

    return MomentProvider(labels, moment, source="file")


def _thresholds_document(table: ThresholdTable) -> dict:
    return {
        "format": "threshold-table",
        "version": 1,
        "mode": table.mode,
        "widths": {_pair_key(*sorted(k)): v for k, v in sorted(table.widths.items(),
                                                               key=lambda kv: sorted(kv[0]))},
    }


def _table_from_thresholds_doc(doc: dict) -> ThresholdTable:
    if doc.get("format") != "threshold-table":
        raise InputError(f"not a threshold-table document: format={doc.get('format')!r}")
    widths = {}
    for key, v in doc["widths"].items():
        a, _, b = key.partition("|")
        widths[frozenset((a, b))] = float(v)
    return ThresholdTable(widths=widths, mode=doc.get("mode", "fixed"))


def _resolve_moments(args) -> tuple[MomentProvider, object | None]:
    """Moment provider plus the raw batch when samples were given."""
    if getattr(args, "samples", None):
        batch = _load_batch(args.samples)
        return empirical_moments(batch), batch
    if getattr(args, "moments", None):
        return _provider_from_moments_doc(_read_json(args.moments)), None
    if getattr(args, "model", None) and getattr(args, "population", False):
        return MomentProvider.from_population(_load_model(args.model)), None
    raise InputError("need --samples, --moments, or --model with --population")


def _resolve_thresholds(args, provider, batch) -> ThresholdTable:
    if getattr(args, "thresholds", None):
        return _table_from_thresholds_doc(_read_json(args.thresholds))
    mode = args.delta_mode
    if mode.startswith("fixed:"):
        return ThresholdTable.uniform(provider.labels, float(mode.split(":", 1)[1]),
                                      mode="fixed")
    if mode == "global":
        choice = tune_global_delta(
            provider, provider.labels, args.k,
            log_grid(args.grid_min, args.grid_max, args.grid_points),
        )
        if choice.all_failed:
            raise InputError("global tuning failed at every grid point; give --thresholds")
        return ThresholdTable.uniform(provider.labels, choice.delta, mode="global_uniform")
    if mode == "formula":
        if batch is None:
            raise InputError("formula mode needs raw samples (--samples)")
        config = RunConfig(k=args.k, eta=args.eta, delta_mode="formula",
                           n_samples=batch.n_samples)
        table, _ = build_thresholds(batch, config)
        return table
    raise InputError(f"unknown delta mode {mode!r}")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    tree = generate_tree(args.n_leaves, args.max_hidden_degree, seed=args.seed)
    margins = ConditionMargins(rho_cap=args.rho_cap, min_sv=args.min_sv)
    model = attach_parameters(tree, args.family, args.k, args.d, margins, seed=args.seed)
    _emit(model_to_document(model), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _load_model(args.model)
    batch = sample(model, args.n_samples, seed=args.seed)
    if not args.out:
        raise InputError("sample requires --out")
    write_samples(batch, args.out, binary=args.format == "binary")
    return EXIT_OK


def cmd_moments(args) -> int:
    batch = _load_batch(args.samples)
    provider = empirical_moments(batch)
    _emit(_moments_document(provider, batch.n_samples), args.out)
    return EXIT_OK


def cmd_thresholds(args) -> int:
    batch = _load_batch(args.samples)
    config = RunConfig(
        k=args.k, eta=args.eta, delta_mode=args.delta_mode,
        grid_min=args.grid_min, grid_max=args.grid_max, grid_points=args.grid_points,
        n_samples=batch.n_samples,
    )
    table, notes = build_thresholds(batch, config)
    doc = _thresholds_document(table)
    if notes:
        doc["notes"] = notes
    _emit(doc, args.out)
    return EXIT_OK


def cmd_learn(args) -> int:
    provider, batch = _resolve_moments(args)
    table = _resolve_thresholds(args, provider, batch)
    result = spectral_recursive_grouping(
        provider, table, provider.labels, args.k, min_correlation=args.min_correlation
    )
    doc = {
        "format": "learn-result",
        "version": 1,
        "failure": result.failed,
        "iterations": result.iterations,
        "quartet_tests_run": result.quartet_tests_run,
        "threshold_mode": table.mode,
    }
    if result.failed:
        _emit(doc, args.out)
        return EXIT_RECONSTRUCTION_FAILURE
    doc["tree"] = tree_to_document(result.tree)
    doc["newick"] = to_newick(result.tree)
    if args.truth:
        truth = _load_model(args.truth)
        cmp = compare_trees(result.tree, truth.tree)
        doc["isomorphic"] = cmp.isomorphic
        doc["rf_distance"] = cmp.rf_distance
    _emit(doc, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    learned_doc = _read_json(args.tree)
    if "tree" in learned_doc:  # accept a learn-result wrapper too
        learned_doc = learned_doc["tree"]
    try:
        learned = load_tree(json.dumps(learned_doc))
    except ValueError as exc:
        raise InputError(f"{args.tree}: {exc}") from exc
    truth = _load_model(args.model).tree
    try:
        cmp = compare_trees(learned, truth)
    except LabelMismatchError as exc:
        raise InputError(str(exc)) from exc
    _emit(
        {"format": "eval-result", "version": 1,
         "isomorphic": cmp.isomorphic, "rf_distance": cmp.rf_distance},
        args.out,
    )
    return EXIT_OK


def cmd_quartet(args) -> int:
    provider, batch = _resolve_moments(args)
    labels = tuple(args.labels.split(","))
    if len(labels) != 4:
        raise InputError("--labels must name exactly 4 observed variables")
    table = _resolve_thresholds(args, provider, batch)
    qin = QuartetInput(
        labels=labels,
        sigma_hat={frozenset(p): provider.moment(*sorted(p))
                   for p in combinations(labels, 2)},
        delta={frozenset(p): table.width(*p) for p in combinations(labels, 2)},
        k=args.k,
    )
    pairing = spectral_quartet_test(qin)
    doc = {"format": "quartet-result", "version": 1, "labels": list(labels)}
    if pairing is None:
        doc["result"] = "abstain"
    else:
        doc["result"] = "pairing"
        doc["groups"] = sorted(sorted(g) for g in pairing.groups())
    _emit(doc, args.out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    model = _load_model(args.model)
    diag = model_diagnostics(model, eta=args.eta, mc_draws=args.mc_draws)
    report = check_conditions(model)
    doc = {
        "format": "diagnostics",
        "version": 1,
        "rho_max": diag.rho_max,
        "gamma_min": diag.gamma_min,
        "gamma_max": diag.gamma_max,
        "b_max": diag.b_max,
        "m_max": diag.m_max,
        "t_max": diag.t_max,
        "d_bar_max": diag.d_bar_max,
        "n_required": diag.n_required,
        "eps_min": diag.eps_min,
        "theta": diag.theta,
        "varsigma": diag.varsigma,
        "violations": list(diag.violations),
        "notes": list(diag.notes),
        "conditions": [
            {"name": c.name, "passed": c.passed, "witness": c.witness, "detail": c.detail}
            for c in report.checks
        ],
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    model = _load_model(args.model)
    n_grid = [int(v) for v in args.n_grid.split(",")]
    rows = sweep(
        model, n_grid, args.trials, base_seed=args.seed, eta=args.eta,
        delta_mode=args.delta_mode, jobs=args.jobs,
    )
    lines = ["n\ttrial\trecovered\trf\tseconds"]
    for r in rows:
        lines.append(f"{r['n']}\t{r['trial']}\t{int(r['recovered'])}\t{r['rf']}\t{r['seconds']:.3f}")
    text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    by_n = {}
    for r in rows:
        by_n.setdefault(r["n"], []).append(r["recovered"])
    summary = {
        "format": "sweep-summary",
        "version": 1,
        "recovery_rate": {str(n): sum(v) / len(v) for n, v in sorted(by_n.items())},
    }
    if args.out:
        Path(args.out).with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    else:
        print(json.dumps(summary, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p, *, k=True, eta=True, delta=True, out=True):
    if k:
        p.add_argument("--k", type=int, default=1, help="hidden rank")
    if eta:
        p.add_argument("--eta", type=float, default=0.05, help="whole-tree failure level")
    if delta:
        p.add_argument("--delta-mode", default="formula",
                       help="formula | global | fixed:<value>")
        p.add_argument("--grid-min", type=float, default=1e-4)
        p.add_argument("--grid-max", type=float, default=1.0)
        p.add_argument("--grid-points", type=int, default=12)
    if out:
        p.add_argument("--out", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectralrg",
        description="Latent tree structure learning via spectral quartet tests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a random model document")
    p.add_argument("--n-leaves", type=int, default=8)
    p.add_argument("--family", choices=["gaussian", "discrete"], default="gaussian")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--max-hidden-degree", type=int, default=8)
    p.add_argument("--rho-cap", type=float, default=0.9)
    p.add_argument("--min-sv", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, eta=False, delta=False)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("sample", help="draw samples from a model document")
    p.add_argument("--model", required=True)
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["text", "binary"], default="text")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("moments", help="empirical second moments from samples")
    p.add_argument("--samples", required=True)
    _add_common(p, k=False, eta=False, delta=False)
    p.set_defaults(handler=cmd_moments)

    p = sub.add_parser("thresholds", help="build a threshold table from samples")
    p.add_argument("--samples", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_thresholds)

    p = sub.add_parser("learn", help="reconstruct the tree")
    p.add_argument("--samples")
    p.add_argument("--moments")
    p.add_argument("--model", help="model document (with --population)")
    p.add_argument("--population", action="store_true",
                   help="use exact population moments from --model")
    p.add_argument("--thresholds", help="threshold-table document")
    p.add_argument("--truth", help="model document to compare against")
    p.add_argument("--min-correlation", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_learn)

    p = sub.add_parser("eval", help="compare a learned tree against a model")
    p.add_argument("--tree", required=True, help="learned tree or learn-result document")
    p.add_argument("--model", required=True)
    _add_common(p, k=False, eta=False, delta=False)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("quartet", help="run one spectral quartet test")
    p.add_argument("--labels", required=True, help="comma-separated 4 labels")
    p.add_argument("--samples")
    p.add_argument("--moments")
    p.add_argument("--model")
    p.add_argument("--population", action="store_true")
    p.add_argument("--thresholds")
    _add_common(p)
    p.set_defaults(handler=cmd_quartet)

    p = sub.add_parser("diagnose", help="model diagnostics and condition checks")
    p.add_argument("--model", required=True)
    p.add_argument("--mc-draws", type=int, default=100_000)
    _add_common(p, k=False, delta=False)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("sweep", help="recovery-rate sweep over sample sizes")
    p.add_argument("--model", required=True)
    p.add_argument("--n-grid", required=True, help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except DefectError as exc:
        print(f"internal defect: {exc}", file=sys.stderr)
        return EXIT_DEFECT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
