"""Spectral quartet test and confidence-width formulas.

The test decides which of the three pairings of four observed variables
matches their induced subtree topology, or abstains when the evidence is
inconclusive.  A pairing is returned only when its clamped lower product of
top-k singular values strictly beats the inflated upper products of *both*
alternative pairings; with that rule at most one pairing can ever qualify,
and with valid confidence widths a returned pairing is always the true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

from .linalg import top_singular_values

__all__ = [
    "ConfidenceParams",
    "Pairing",
    "PlugInBounds",
    "QuartetInput",
    "TIE_RTOL",
    "bernstein_width",
    "delta_bernstein",
    "delta_discrete",
    "estimate_plug_in_bounds",
    "max_delta_full_rank",
    "max_delta_rank_r",
    "pairing_from_singular_values",
    "spectral_quartet_test",
    "t_factor_quartet",
    "t_factor_tree",
]

# Relative tolerance under which two partition products count as tied.  On
# exact population moments of a star topology the three products are equal
# and must not produce a winner by floating-point accident.
TIE_RTOL = 1e-9

_LOG_TIE = math.log1p(TIE_RTOL)


def _pair(a, b) -> frozenset:
    return frozenset((a, b))


@dataclass(frozen=True)
class Pairing:
    """A partition of four labels into two groups of two."""

    group_a: frozenset
    group_b: frozenset

    def __post_init__(self):
        if len(self.group_a) != 2 or len(self.group_b) != 2 or self.group_a & self.group_b:
            raise ValueError("pairing groups must be disjoint 2-sets")

    def labels(self) -> frozenset:
        return self.group_a | self.group_b

    def groups(self) -> frozenset:
        return frozenset((self.group_a, self.group_b))

    def together(self, x, y) -> bool:
        return _pair(x, y) in (self.group_a, self.group_b)

    def separates(self, x, y) -> bool:
        return not self.together(x, y)

    def __eq__(self, other):
        if not isinstance(other, Pairing):
            return NotImplemented
        return self.groups() == other.groups()

    def __hash__(self):
        return hash(self.groups())


@dataclass(frozen=True)
class QuartetInput:
    """Inputs to one quartet test.

    ``sigma_hat`` maps each unordered label pair to an estimate of the
    corresponding second-moment matrix (orientation is irrelevant: only
    singular values are consumed).  ``delta`` maps the same keys to
    non-negative confidence widths.
    """

    labels: tuple
    sigma_hat: Mapping[frozenset, np.ndarray]
    delta: Mapping[frozenset, float]
    k: int

    def validate(self) -> None:
        if len(self.labels) != 4 or len(set(self.labels)) != 4:
            raise ValueError("need exactly 4 distinct labels")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for a, b in combinations(self.labels, 2):
            key = _pair(a, b)
            if key not in self.sigma_hat:
                raise ValueError(f"missing second-moment matrix for pair {sorted(key)}")
            m = np.asarray(self.sigma_hat[key])
            if min(m.shape) < self.k:
                raise ValueError(f"matrix for pair {sorted(key)} has min dim < k={self.k}")
            if key not in self.delta or self.delta[key] < 0:
                raise ValueError(f"missing or negative width for pair {sorted(key)}")


def _log_product(factors) -> float:
    # product of non-negative factors, accumulated in log space so k small
    # singular values cannot underflow to a spurious zero
    total = 0.0
    for f in factors:
        if f <= 0.0:
            return -math.inf
        total += math.log(f)
    return total


def _beats(lower: float, upper: float) -> bool:
    # strict win with a relative tie guard (log domain)
    if lower == -math.inf:
        return False
    if upper == -math.inf:
        return True
    return lower > upper + _LOG_TIE


def pairing_from_singular_values(labels, sv, delta, k: int) -> Pairing | None:
    """Quartet decision from precomputed top-k singular values per pair.

    ``sv`` maps each unordered pair of labels to its descending singular
    values (length >= k); ``delta`` maps pairs to widths.  Returns the
    winning Pairing or None (abstain).
    """
    z1, z2, z3, z4 = labels
    partitions = (
        (_pair(z1, z2), _pair(z3, z4)),
        (_pair(z1, z3), _pair(z2, z4)),
        (_pair(z1, z4), _pair(z2, z3)),
    )

    lower = []
    upper = []
    for p, q in partitions:
        sp, sq = sv[p][:k], sv[q][:k]
        dp, dq = delta[p], delta[q]
        # max(0, .) directly so infinite widths clamp to zero instead of erroring
        lower.append(
            _log_product([max(0.0, s - dp) for s in sp])
            + _log_product([max(0.0, s - dq) for s in sq])
        )
        upper.append(_log_product([s + dp for s in sp]) + _log_product([s + dq for s in sq]))

    winners = [
        i
        for i in range(3)
        if all(_beats(lower[i], upper[j]) for j in range(3) if j != i)
    ]
    if len(winners) != 1:
        # zero winners is the ordinary abstention; more than one cannot
        # happen under the beats-both rule but is rejected defensively
        return None
    p, q = partitions[winners[0]]
    return Pairing(p, q)


def spectral_quartet_test(qin: QuartetInput) -> Pairing | None:
    """Run the quartet test; returns the selected Pairing or None (abstain)."""
    qin.validate()
    sv = {
        _pair(a, b): top_singular_values(qin.sigma_hat[_pair(a, b)], qin.k)
        for a, b in combinations(qin.labels, 2)
    }
    return pairing_from_singular_values(qin.labels, sv, qin.delta, qin.k)


# ---------------------------------------------------------------------------
# Confidence widths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfidenceParams:
    """Quantities behind a Bernstein-style spectral-norm confidence width.

    ``b`` bounds the variance term (the larger of the two weighted
    second-moment spectral norms), ``m_i``/``m_j`` are almost-sure norm
    bounds, ``d_bar`` is the effective dimension, ``t`` the log factor, and
    ``n`` the sample count.  ``delta_conf`` is the failure probability when
    the width is used at the quartet level; it is optional because the same
    width formula is reused with a tree-level log factor.
    """

    b: float
    m_i: float
    m_j: float
    t: float
    n: int
    d_bar: float = 1.0
    delta_conf: float | None = None

    def validate(self) -> None:
        if self.b <= 0 or self.m_i <= 0 or self.m_j <= 0:
            raise ValueError("b, m_i, m_j must be positive")
        if self.d_bar < 1:
            raise ValueError("d_bar must be >= 1")
        if self.t <= 0:
            raise ValueError("t must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.delta_conf is not None and not 0 < self.delta_conf < 1 / 6:
            raise ValueError("delta_conf must lie in (0, 1/6)")


def bernstein_width(b: float, m_i: float, m_j: float, t: float, n: int) -> float:
    """sqrt(2*b*t/n) + m_i*m_j*t/(3*n)."""
    return math.sqrt(2.0 * b * t / n) + m_i * m_j * t / (3.0 * n)


def delta_bernstein(params: ConfidenceParams) -> float:
    """Confidence width for ||Sigma_hat - Sigma|| from Bernstein parameters."""
    params.validate()
    return bernstein_width(params.b, params.m_i, params.m_j, params.t, params.n)


def t_factor_quartet(d_bar: float, delta_conf: float) -> float:
    """Log factor 1.55*ln(24*d_bar/delta_conf) for a single quartet at level delta."""
    if d_bar < 1:
        raise ValueError("d_bar must be >= 1")
    if not 0 < delta_conf < 1 / 6:
        raise ValueError("delta_conf must lie in (0, 1/6)")
    return 1.55 * math.log(24.0 * d_bar / delta_conf)


def t_factor_tree(d_bar: float, n_leaves: int, eta: float) -> float:
    """Log factor 4*ln(4*d_bar*n/eta) for whole-tree runs at level eta."""
    if d_bar < 1:
        raise ValueError("d_bar must be >= 1")
    if n_leaves < 3:
        raise ValueError("n_leaves must be >= 3")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    return 4.0 * math.log(4.0 * d_bar * n_leaves / eta)


def delta_discrete(n: int, t: float) -> float:
    """Frobenius-norm width (1 + sqrt(t))/sqrt(n) for simplex-vertex vectors.

    Valid with probability at least 1 - exp(-t); the Frobenius norm
    dominates the spectral norm, so the same width bounds both.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if t <= 0:
        raise ValueError("t must be positive")
    return (1.0 + math.sqrt(t)) / math.sqrt(n)


def max_delta_full_rank(k: int, rho: float, sigma_k_min: float) -> float:
    """Strict upper bound on uniform widths guaranteeing a correct pairing.

    Applies when the bottleneck cross-moment has full rank k; ``rho`` is the
    normalized determinant ratio between the two inner hidden variables and
    ``sigma_k_min`` the smallest k-th singular value over the six pairs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if sigma_k_min <= 0:
        raise ValueError("sigma_k_min must be positive")
    return (1.0 / (8.0 * k)) * min(1.0, 1.0 / rho - 1.0) * sigma_k_min


def max_delta_rank_r(k: int, r: int, rho1: float, sigma_min: float) -> float:
    """Width bound for the rank-deficient bottleneck case (rank r < k)."""
    if not 1 <= r < k:
        raise ValueError("need 1 <= r < k")
    if rho1 <= 0:
        raise ValueError("rho1 must be positive")
    if sigma_min <= 0:
        raise ValueError("sigma_min must be positive")
    inner = 8.0 * k * (1.0 / (2.0 * rho1)) ** (1.0 / (k - r))
    return (1.0 / (8.0 * k)) * min(1.0, inner) * sigma_min


# ---------------------------------------------------------------------------
# Plug-in estimation of the width parameters from raw samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlugInBounds:
    """Empirical substitutes for the Bernstein width parameters.

    ``m_i``/``m_j`` are empirical maxima of the observation norms; for
    unbounded (Gaussian) variables no almost-sure bound exists, so widths
    built from these are approximations rather than certified bounds.
    """

    b: float
    m_i: float
    m_j: float
    d_bar: float


def estimate_plug_in_bounds(x: np.ndarray, y: np.ndarray) -> PlugInBounds:
    """Estimate b, m_i, m_j, d_bar from paired samples (rows are draws)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise ValueError("x and y must be (n, d) arrays with a shared n >= 1")
    n = x.shape[0]
    xn2 = np.einsum("ni,ni->n", x, x)
    yn2 = np.einsum("ni,ni->n", y, y)
    wxx = np.einsum("n,ni,nj->ij", yn2, x, x) / n
    wyy = np.einsum("n,ni,nj->ij", xn2, y, y) / n
    b = max(
        float(np.linalg.norm(wxx, 2)),
        float(np.linalg.norm(wyy, 2)),
    )
    sigma = x.T @ y / n
    fourth = float(np.mean(xn2 * yn2))
    d_bar = max(1.0, (fourth - float(np.sum(sigma * sigma))) / b) if b > 0 else 1.0
    return PlugInBounds(
        b=b,
        m_i=float(np.sqrt(xn2.max())),
        m_j=float(np.sqrt(yn2.max())),
        d_bar=d_bar,
    )
