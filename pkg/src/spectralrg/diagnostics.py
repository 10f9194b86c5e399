"""Model diagnostics: condition margins, width constants, sample-size bound.

The structural quantities (redundancy ratio, correlation floor) come from
exact population moments.  The width constants (b, m, t, d_bar) are exact in
the discrete family, where every observation is a coordinate vector of unit
norm, and Monte-Carlo estimates with a recorded seed in the Gaussian family,
where no almost-sure norm bound exists and the empirical maximum is
substituted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .linalg import RANK_RTOL, singular_values
from .models import DISCRETE, GAUSSIAN, LinearTreeModel, sample
from .moments import cross_moment, node_second_moments, population_moments
from .quartet import estimate_plug_in_bounds, t_factor_tree

__all__ = [
    "ConditionCheck",
    "ConditionReport",
    "ModelDiagnostics",
    "check_conditions",
    "model_diagnostics",
    "sample_bound",
]


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    witness: float | None
    detail: str


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class ModelDiagnostics:
    rho_max: float
    gamma_min: float
    gamma_max: float
    b_max: float
    m_max: float
    t_max: float
    d_bar_max: float
    n_required: float
    eps_min: float
    theta: float
    varsigma: float
    eta: float
    violations: tuple
    notes: tuple
    mc_draws: int | None = None
    mc_seed: int | None = None
    mc_rel_se: float | None = None


def _structure_quantities(model: LinearTreeModel):
    """(rho_max, gamma_min, gamma_max) from exact population moments."""
    tree = model.tree
    second = node_second_moments(model)
    pop = population_moments(model)

    rho_max = 0.0
    for h, g in combinations(tree.hidden, 2):
        num = float(np.linalg.det(cross_moment(model, h, g, second))) ** 2
        den = float(np.linalg.det(second[h])) * float(np.linalg.det(second[g]))
        rho_max = max(rho_max, math.sqrt(max(0.0, num / den)) if den > 0 else math.inf)

    sigma_k = {}
    for x, y in combinations(pop.labels, 2):
        sv = singular_values(pop.moment(x, y))
        sigma_k[frozenset((x, y))] = float(sv[model.k - 1]) if sv.size >= model.k else 0.0
    gamma_max = max(
        float(singular_values(pop.moment(x, y))[0]) for x, y in combinations(pop.labels, 2)
    )

    gamma_min = math.inf
    obs = set(tree.observed)
    for h in tree.hidden:
        groups = []
        seen = {h}
        for w in tree.adjacency[h]:
            if w in seen:
                continue
            comp, stack = [], [w]
            seen.add(w)
            while stack:
                v = stack.pop()
                comp.append(v)
                for nxt in tree.adjacency[v]:
                    if nxt not in seen and nxt != h:
                        seen.add(nxt)
                        stack.append(nxt)
            groups.append(sorted(n for n in comp if n in obs))
        for trio in combinations(range(len(groups)), 3):
            best = 0.0
            for x1, x2, x3 in product(groups[trio[0]], groups[trio[1]], groups[trio[2]]):
                best = max(
                    best,
                    min(
                        sigma_k[frozenset((x1, x2))],
                        sigma_k[frozenset((x1, x3))],
                        sigma_k[frozenset((x2, x3))],
                    ),
                )
            gamma_min = min(gamma_min, best)
    return rho_max, gamma_min, gamma_max


def sample_bound(k: int, b: float, m: float, t: float, gamma_min: float, gamma_max: float, rho_max: float) -> float:
    """Samples sufficient for whole-tree recovery at the configured level."""
    margin = (gamma_min**2 / gamma_max) * (1.0 - rho_max)
    if margin <= 0:
        return math.inf
    return 200.0 * k**2 * b * t / margin**2 + 7.0 * k * m**2 * t / margin


def model_diagnostics(
    model: LinearTreeModel,
    eta: float = 0.05,
    mc_draws: int = 100_000,
    mc_seed: int = 20_240_501,
) -> ModelDiagnostics:
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    rho_max, gamma_min, gamma_max = _structure_quantities(model)
    tree = model.tree
    n_leaves = len(tree.observed)
    violations = []
    notes = []
    if rho_max >= 1:
        violations.append(f"redundant hidden pair: rho_max={rho_max:.6g} >= 1")
    if gamma_min <= 0 or not math.isfinite(gamma_min):
        violations.append(f"correlation floor collapsed: gamma_min={gamma_min:.6g}")

    mc_info = (None, None, None)
    if model.family == DISCRETE:
        pop = population_moments(model)
        second = pop.node_second_moments
        b_max = t_max = d_bar_max = 0.0
        for x, y in combinations(pop.labels, 2):
            b_xy = max(float(np.max(np.diag(second[x]))), float(np.max(np.diag(second[y]))))
            sigma = pop.moment(x, y)
            d_bar = max(1.0, (1.0 - float(np.sum(sigma * sigma))) / b_xy)
            b_max = max(b_max, b_xy)
            d_bar_max = max(d_bar_max, d_bar)
            t_max = max(t_max, t_factor_tree(d_bar, n_leaves, eta))
        m_max = 1.0  # coordinate vectors have unit norm almost surely
    else:
        batch = sample(model, mc_draws, seed=mc_seed)
        b_max = t_max = d_bar_max = m_max = 0.0
        rel_se = 0.0
        for x, y in combinations(batch.leaves, 2):
            est = estimate_plug_in_bounds(batch.data[x], batch.data[y])
            b_max = max(b_max, est.b)
            m_max = max(m_max, est.m_i, est.m_j)
            d_bar_max = max(d_bar_max, est.d_bar)
            t_max = max(t_max, t_factor_tree(est.d_bar, n_leaves, eta))
            fourth = np.einsum("ni,ni->n", batch.data[x], batch.data[x]) * np.einsum(
                "ni,ni->n", batch.data[y], batch.data[y]
            )
            mean = float(fourth.mean())
            if mean > 0:
                rel_se = max(rel_se, float(fourth.std(ddof=1)) / math.sqrt(mc_draws) / mean)
        mc_info = (mc_draws, mc_seed, rel_se)
        notes.append("gaussian norm bound m is the Monte-Carlo empirical max (approximation)")

    n_required = sample_bound(model.k, b_max, m_max, t_max, gamma_min, gamma_max, rho_max)

    eps_min = min(1.0 / rho_max - 1.0, 1.0) if rho_max > 0 else 1.0
    ratio = gamma_min / gamma_max if gamma_max > 0 else 0.0
    eps = ratio / (8.0 * model.k + ratio)
    theta = gamma_min / (1.0 + eps)
    varsigma = ratio * (1.0 - eps) * theta

    return ModelDiagnostics(
        rho_max=rho_max,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        b_max=b_max,
        m_max=m_max,
        t_max=t_max,
        d_bar_max=d_bar_max,
        n_required=n_required,
        eps_min=eps_min,
        theta=theta,
        varsigma=varsigma,
        eta=eta,
        violations=tuple(violations),
        notes=tuple(notes),
        mc_draws=mc_info[0],
        mc_seed=mc_info[1],
        mc_rel_se=mc_info[2],
    )


def check_conditions(model: LinearTreeModel) -> ConditionReport:
    """Pass/fail per model condition with the witnessing quantity."""
    tree = model.tree
    checks = []

    checks.append(
        ConditionCheck(
            name="linear_means",
            passed=True,
            witness=None,
            detail="conditional means are exact linear maps by model construction",
        )
    )

    min_rank_sv = math.inf
    rank_ok = True
    second = None
    try:
        second = node_second_moments(model)
    except Exception:
        rank_ok = False
    if second is not None:
        mats = [second[h] for h in tree.hidden]
        mats.extend(model.edge_maps.values())
        for m in mats:
            sv = singular_values(m)
            if sv.size < model.k or sv[model.k - 1] <= RANK_RTOL * max(sv[0], 1.0):
                rank_ok = False
                min_rank_sv = 0.0
                break
            min_rank_sv = min(min_rank_sv, float(sv[model.k - 1]))
    checks.append(
        ConditionCheck(
            name="rank",
            passed=rank_ok,
            witness=None if math.isinf(min_rank_sv) else min_rank_sv,
            detail="min sigma_k over hidden second moments and edge maps",
        )
    )

    problems = tree.structural_problems()
    rho_max, gamma_min = math.inf, 0.0
    if second is not None and rank_ok:
        try:
            rho_max, gamma_min, _ = _structure_quantities(model)
        except Exception:
            pass
    checks.append(
        ConditionCheck(
            name="non_redundancy",
            passed=not problems and rho_max < 1.0 - 1e-9,
            witness=rho_max,
            detail="; ".join(problems) if problems else "every hidden pair has rho < 1",
        )
    )

    checks.append(
        ConditionCheck(
            name="correlation",
            passed=math.isfinite(gamma_min) and gamma_min > 1e-9,
            witness=gamma_min if math.isfinite(gamma_min) else None,
            detail="max-min sigma_k over subtree triples around each hidden node",
        )
    )
    return ConditionReport(checks=tuple(checks))
