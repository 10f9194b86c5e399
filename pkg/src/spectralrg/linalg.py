"""Dense spectral primitives: top-k singular values, truncated determinants.

Everything here is a pure function of its inputs. Singular vectors are never
computed; all downstream logic consumes singular values only.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DimensionError",
    "NumericError",
    "RANK_RTOL",
    "clamp_nonneg",
    "det_k",
    "log_det_k",
    "singular_values",
    "spectral_norm",
    "top_singular_values",
]

# Singular values below RANK_RTOL * sigma_1 count as exactly zero in rank
# determinations, so a rank-deficient population matrix cannot leak a tiny
# nonzero factor into a truncated determinant.
RANK_RTOL = 1e-12


class DimensionError(ValueError):
    """Requested truncation rank exceeds what the matrix supports."""


class NumericError(ValueError):
    """Non-finite input, or a quantity that must be invertible is singular."""


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix contains NaN or Inf entries")
    return a


def singular_values(m) -> np.ndarray:
    """All singular values of ``m``, descending."""
    return np.linalg.svd(_as_matrix(m), compute_uv=False)


def top_singular_values(m, k: int) -> np.ndarray:
    """The ``k`` largest singular values of ``m``, descending.

    Raises DimensionError if ``k`` exceeds min(rows, cols).
    """
    a = _as_matrix(m)
    if not 1 <= k <= min(a.shape):
        raise DimensionError(f"k={k} out of range for shape {a.shape}")
    return np.linalg.svd(a, compute_uv=False)[:k]


def spectral_norm(m) -> float:
    """Largest singular value (operator 2-norm) of ``m``."""
    return float(singular_values(m)[0])


def _snap_small(sv: np.ndarray) -> np.ndarray:
    # zero out values indistinguishable from rank deficiency
    if sv.size == 0 or sv[0] <= 0.0:
        return np.zeros_like(sv)
    out = sv.copy()
    out[out < RANK_RTOL * sv[0]] = 0.0
    return out


def det_k(m, k: int) -> float:
    """Product of the ``k`` largest singular values of ``m``.

    Zero iff the numerical rank of ``m`` is below ``k`` (values under
    RANK_RTOL * sigma_1 are treated as exact zeros).
    """
    sv = _snap_small(top_singular_values(m, k))
    return float(np.prod(sv))


def log_det_k(m, k: int) -> float:
    """log of det_k(m); raises NumericError when det_k(m) is zero."""
    sv = _snap_small(top_singular_values(m, k))
    if np.any(sv == 0.0):
        raise NumericError(f"matrix has numerical rank < {k}")
    return float(np.sum(np.log(sv)))


def clamp_nonneg(a: float) -> float:
    """max(0, a)."""
    if not math.isfinite(a):
        raise NumericError("expected a finite value")
    return a if a > 0.0 else 0.0
