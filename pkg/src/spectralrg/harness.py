"""End-to-end experiment plumbing: thresholds, tuning, runs, sweeps.

Two routes produce a threshold table.  Formula mode evaluates the Bernstein
width per pair from plug-in estimates with the whole-tree log factor.
Global mode sweeps a log-spaced grid of uniform widths, groups consecutive
grid points whose reconstructions agree, and keeps the midpoint of the
longest plateau; this tuning rule is a declared heuristic, not something the
width theory prescribes, and reports label it as such.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from itertools import combinations

import numpy as np

from .compare import compare_trees
from .diagnostics import model_diagnostics
from .models import LinearTreeModel, SampleBatch, sample
from .moments import MomentProvider, empirical_moments
from .quartet import bernstein_width, estimate_plug_in_bounds, t_factor_tree
from .srg import SRGResult, ThresholdTable, spectral_recursive_grouping

__all__ = [
    "GlobalDeltaChoice",
    "RunConfig",
    "RunReport",
    "build_thresholds",
    "formula_thresholds",
    "run_experiment",
    "sweep",
    "tune_global_delta",
]


@dataclass(frozen=True)
class RunConfig:
    """Parameters for one end-to-end run (generation through evaluation)."""

    n_leaves: int = 8
    k: int = 1
    d: int = 1
    family: str = "gaussian"
    seed: int = 0
    n_samples: int = 0  # 0 = population-oracle run
    eta: float = 0.05
    delta_mode: str = "formula"  # formula | global | fixed:<value>
    grid_min: float = 1e-4
    grid_max: float = 1.0
    grid_points: int = 12
    jobs: int = 1
    min_correlation: float | None = None
    mc_draws: int = 100_000
    diagnose: bool = True

    def validate(self) -> None:
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.delta_mode in ("global",) and not (
            0 < self.grid_min < self.grid_max and self.grid_points >= 8
        ):
            raise ValueError("global mode needs 0 < grid_min < grid_max and >= 8 grid points")
        if self.delta_mode.startswith("fixed:"):
            value = float(self.delta_mode.split(":", 1)[1])
            if value < 0:
                raise ValueError("fixed threshold must be non-negative")
        elif self.delta_mode not in ("formula", "global"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")


def formula_thresholds(batch: SampleBatch, eta: float) -> ThresholdTable:
    """Per-pair Bernstein widths with plug-in parameters and tree log factor."""
    n_leaves = len(batch.leaves)
    widths = {}
    metadata = {}
    for x, y in combinations(batch.leaves, 2):
        est = estimate_plug_in_bounds(batch.data[x], batch.data[y])
        t = t_factor_tree(est.d_bar, n_leaves, eta)
        key = frozenset((x, y))
        widths[key] = bernstein_width(est.b, est.m_i, est.m_j, t, batch.n_samples)
        metadata[key] = {"b": est.b, "m_i": est.m_i, "m_j": est.m_j, "d_bar": est.d_bar, "t": t}
    return ThresholdTable(widths=widths, mode="per_pair_formula", metadata=metadata)


@dataclass(frozen=True)
class GlobalDeltaChoice:
    delta: float | None
    plateau: tuple  # (start index, end index) into the grid, or ()
    all_failed: bool
    grid: tuple
    outcomes: tuple  # per grid point: "failure" or a bipartition fingerprint


def tune_global_delta(
    moments: MomentProvider, leaves, k: int, grid, min_correlation=None
) -> GlobalDeltaChoice:
    """Pick a single uniform width from the longest stable plateau.

    Consecutive grid points count as one plateau when both reconstructions
    succeed and are isomorphic.  Ties go to the plateau at larger widths,
    and the log-midpoint rounds toward larger widths too.
    """
    grid = tuple(sorted(float(g) for g in grid))
    if len(grid) < 8:
        raise ValueError("tuning grid needs at least 8 points")
    trees = []
    for delta in grid:
        res = spectral_recursive_grouping(
            moments,
            ThresholdTable.uniform(leaves, delta),
            leaves,
            k,
            min_correlation=min_correlation,
        )
        trees.append(res.tree if not res.failed else None)

    outcomes = tuple("failure" if t is None else "tree" for t in trees)
    if all(t is None for t in trees):
        return GlobalDeltaChoice(None, (), True, grid, outcomes)

    best = None  # (length, end, start)
    start = 0
    while start < len(grid):
        if trees[start] is None:
            start += 1
            continue
        end = start
        while (
            end + 1 < len(grid)
            and trees[end + 1] is not None
            and compare_trees(trees[end], trees[end + 1]).isomorphic
        ):
            end += 1
        cand = (end - start + 1, end, start)
        if best is None or cand >= best:
            best = cand
        start = end + 1
    _, end, start = best
    mid = (start + end + 1) // 2
    return GlobalDeltaChoice(grid[mid], (start, end), False, grid, outcomes)


def log_grid(lo: float, hi: float, points: int):
    return tuple(np.geomspace(lo, hi, points))


def build_thresholds(batch: SampleBatch, config: RunConfig) -> tuple[ThresholdTable, list]:
    """Threshold table for a sample batch per the configured mode.

    Returns the table plus notes (e.g. when global tuning fell back to the
    formula widths because every grid point failed).
    """
    config.validate()
    notes = []
    if config.delta_mode.startswith("fixed:"):
        value = float(config.delta_mode.split(":", 1)[1])
        return ThresholdTable.uniform(batch.leaves, value, mode="fixed"), notes
    if config.delta_mode == "formula":
        return formula_thresholds(batch, config.eta), notes

    moments = empirical_moments(batch)
    choice = tune_global_delta(
        moments,
        batch.leaves,
        config.k,
        log_grid(config.grid_min, config.grid_max, config.grid_points),
        min_correlation=config.min_correlation,
    )
    if choice.all_failed:
        notes.append("global tuning failed at every grid point; using formula widths")
        table = formula_thresholds(batch, config.eta)
        return ThresholdTable(widths=table.widths, mode="global_fallback_formula",
                              metadata=table.metadata), notes
    notes.append("global width tuned by plateau heuristic (not a certified bound)")
    table = ThresholdTable.uniform(batch.leaves, choice.delta, mode="global_uniform")
    return ThresholdTable(widths=table.widths, mode=table.mode,
                          metadata={"plateau": choice.plateau, "grid": choice.grid}), notes


@dataclass(frozen=True)
class RunReport:
    recovered: bool
    rf_distance: int | None
    iterations: int
    failure: bool
    wall_time_s: float
    n_samples: int
    threshold_mode: str
    threshold_min: float | None
    threshold_max: float | None
    rho_max: float | None
    gamma_min: float | None
    gamma_max: float | None
    n_required: float | None
    model_seed: int
    sample_seed: int | None
    notes: tuple

    def to_document(self) -> dict:
        doc = asdict(self)
        doc["notes"] = list(self.notes)
        return {"format": "run-report", "version": 1, **doc}


def _threshold_span(table: ThresholdTable):
    values = list(table.widths.values())
    return (min(values), max(values)) if values else (None, None)


def run_experiment(config: RunConfig, model: LinearTreeModel) -> RunReport:
    """Sample (unless population mode), build widths, learn, compare."""
    config.validate()
    t0 = time.perf_counter()
    notes = []
    sample_seed = None

    if config.n_samples == 0:
        moments = MomentProvider.from_population(model)
        thresholds = ThresholdTable.uniform(model.tree.observed, 0.0, mode="population_zero")
        if config.delta_mode.startswith("fixed:"):
            value = float(config.delta_mode.split(":", 1)[1])
            thresholds = ThresholdTable.uniform(model.tree.observed, value, mode="fixed")
    else:
        sample_seed = config.seed
        batch = sample(model, config.n_samples, seed=sample_seed)
        moments = empirical_moments(batch)
        thresholds, notes = build_thresholds(batch, config)

    result = spectral_recursive_grouping(
        moments,
        thresholds,
        model.tree.observed,
        config.k,
        min_correlation=config.min_correlation,
    )
    rf = None
    recovered = False
    if not result.failed:
        cmp = compare_trees(result.tree, model.tree)
        rf = cmp.rf_distance
        recovered = cmp.isomorphic

    rho_max = gamma_min = gamma_max = n_required = None
    if config.diagnose:
        diag = model_diagnostics(model, eta=config.eta, mc_draws=config.mc_draws)
        rho_max, gamma_min, gamma_max = diag.rho_max, diag.gamma_min, diag.gamma_max
        n_required = diag.n_required
        notes = list(notes) + list(diag.notes)

    lo, hi = _threshold_span(thresholds)
    return RunReport(
        recovered=recovered,
        rf_distance=rf,
        iterations=result.iterations,
        failure=result.failed,
        wall_time_s=time.perf_counter() - t0,
        n_samples=config.n_samples,
        threshold_mode=thresholds.mode,
        threshold_min=lo,
        threshold_max=hi,
        rho_max=rho_max,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        n_required=n_required,
        model_seed=config.seed,
        sample_seed=sample_seed,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Sample-size sweeps
# ---------------------------------------------------------------------------


def _sweep_trial(args):
    doc, n, trial, trial_seed, eta, delta_mode, k, min_correlation = args
    from .models import model_from_document

    model = model_from_document(doc)
    t0 = time.perf_counter()
    batch = sample(model, n, seed=trial_seed)
    moments = empirical_moments(batch)
    config = RunConfig(
        k=k, eta=eta, delta_mode=delta_mode, n_samples=n, seed=trial_seed,
        min_correlation=min_correlation, diagnose=False,
    )
    thresholds, _ = build_thresholds(batch, config)
    result = spectral_recursive_grouping(
        moments, thresholds, model.tree.observed, k, min_correlation=min_correlation
    )
    if result.failed:
        recovered, rf = False, -1
    else:
        cmp = compare_trees(result.tree, model.tree)
        recovered, rf = cmp.isomorphic, cmp.rf_distance
    return {
        "n": n,
        "trial": trial,
        "recovered": recovered,
        "rf": rf,
        "seconds": time.perf_counter() - t0,
    }


def sweep(
    model: LinearTreeModel,
    n_grid,
    trials: int,
    base_seed: int = 0,
    eta: float = 0.05,
    delta_mode: str = "formula",
    jobs: int = 1,
    min_correlation=None,
) -> list:
    """Recovery trials over a sample-size grid; rows sorted by (n, trial)."""
    from .models import model_to_document

    doc = model_to_document(model)
    tasks = []
    for n in n_grid:
        for trial in range(trials):
            trial_seed = base_seed + 7919 * int(n) + trial
            tasks.append((doc, int(n), trial, trial_seed, eta, delta_mode, model.k,
                          min_correlation))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_trial, tasks))
    else:
        rows = [_sweep_trial(t) for t in tasks]
    rows.sort(key=lambda r: (r["n"], r["trial"]))
    return rows
