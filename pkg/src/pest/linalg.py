"""Vector primitives: normalization, cosine scores, tempered softmax cross-entropy.

All functions take and return float64 numpy arrays and never mutate their
inputs.  The cross-entropy keeps full precision in the nearly-saturated regime
(label logit far ahead) by switching to a ``log1p`` formulation there.
"""

import numpy as np

from .exceptions import (
    BadLabelError,
    DimensionMismatchError,
    NonPositiveTemperatureError,
    ZeroNormError,
)
from .validation import as_labels, as_matrix, as_vector

# Norms at or below this are treated as zero.
_NORM_FLOOR = 1e-12


def l2_normalize(v) -> np.ndarray:
    """Return ``v`` scaled to unit Euclidean norm.

    Raises :class:`ZeroNormError` when the norm is at or below 1e-12.
    """
    vec = as_vector(v, "v")
    norm = float(np.linalg.norm(vec))
    if norm <= _NORM_FLOOR:
        raise ZeroNormError(f"cannot normalize vector with norm {norm:.3e}")
    return vec / norm


def l2_normalize_rows(X) -> np.ndarray:
    """Row-wise :func:`l2_normalize` for a 2-D array."""
    mat = as_matrix(X, "X")
    norms = np.linalg.norm(mat, axis=1)
    bad = np.nonzero(norms <= _NORM_FLOOR)[0]
    if bad.size:
        raise ZeroNormError(f"cannot normalize row {bad[0]} with norm {norms[bad[0]]:.3e}")
    return mat / norms[:, None]


def dot(a, b) -> float:
    """Inner product of two equal-length vectors."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatchError(
            f"a and b must have equal length, got {va.shape[0]} vs {vb.shape[0]}"
        )
    return float(va @ vb)


def _check_temperature(temperature: float) -> float:
    t = float(temperature)
    if not np.isfinite(t) or t <= 0.0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature!r}")
    return t


def softmax_cross_entropy(logits, label: int, temperature: float = 1.0):
    """Cross-entropy of tempered softmax against a hard label.

    Returns ``(loss, grad)`` where ``grad`` is the analytic gradient with
    respect to the raw logits, ``(softmax(logits / t) - onehot(label)) / t``.
    The loss is computed as ``logsumexp(logits / t) - logits[label] / t`` with
    max subtraction, falling back to a ``log1p`` form when the label attains
    the maximum so that near-zero losses keep their leading digits.
    """
    z = as_vector(logits, "logits")
    t = _check_temperature(temperature)
    n = z.shape[0]
    if not isinstance(label, (int, np.integer)) or not 0 <= int(label) < n:
        raise BadLabelError(f"label must be an int in [0, {n}), got {label!r}")
    label = int(label)

    d = z / t
    d = d - d[label]  # d[label] == 0 exactly
    m = float(np.max(d))
    shifted = np.exp(d - m)
    denom = float(np.sum(shifted))
    if m == 0.0:
        # Label attains the max: loss = log(1 + sum over other classes), and
        # that sum must be formed without the label's 1.0 or it cancels away.
        rest = shifted.copy()
        rest[label] = 0.0
        loss = float(np.log1p(np.sum(rest)))
    else:
        loss = m + float(np.log(denom))
    probs = shifted / denom
    grad = probs.copy()
    grad[label] -= 1.0
    grad /= t
    return loss, grad


def softmax_cross_entropy_batch(logits, labels, temperature: float = 1.0):
    """Vectorized :func:`softmax_cross_entropy` over rows of ``logits``.

    Returns ``(losses, grads)`` with one row per sample.  Matches the scalar
    function exactly, branch for branch.
    """
    Z = as_matrix(logits, "logits")
    t = _check_temperature(temperature)
    n, k = Z.shape
    y = as_labels(labels, "labels", length=n)
    if y.size and (y.min() < 0 or y.max() >= k):
        raise BadLabelError(f"labels must lie in [0, {k})")

    rows = np.arange(n)
    D = Z / t
    D = D - D[rows, y][:, None]
    m = np.max(D, axis=1)
    shifted = np.exp(D - m[:, None])
    denom = np.sum(shifted, axis=1)
    rest = shifted.copy()
    rest[rows, y] = 0.0
    losses = np.where(m == 0.0, np.log1p(np.sum(rest, axis=1)), m + np.log(denom))
    grads = shifted / denom[:, None]
    grads[rows, y] -= 1.0
    grads /= t
    return losses, grads
