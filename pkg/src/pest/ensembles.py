"""Centroid construction: language, vision, and temporal prompt fusion.

All three fusions produce unit-norm class centroids in feature space.

Language fusion is two-step: average the prompt-variant features into a draft
centroid, then re-average with per-variant weights given by agreement with the
draft.  Weights are clamped at zero by default so a variant pointing away from
the consensus is dropped rather than subtracted; ``raw_weights=True`` keeps
the signed weights for comparison.

Vision fusion groups view features by their pseudo label and averages within
each class.  Temporal fusion blends the running fused centroid with the newest
vision centroid under a retention factor ``lam`` and renormalizes.

The averaging baselines (uniform mean, softmax-weighted mean, per-variant
majority vote) live here too so they share validation.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadLabelError,
    ConfigError,
    DimensionMismatchError,
    MissingCentroidError,
    ZeroNormError,
)
from .linalg import l2_normalize
from .validation import as_labels, as_matrix, as_vector


def language_ensemble(features, raw_weights: bool = False) -> np.ndarray:
    """Fuse K prompt-variant features into one unit centroid.

    With clamped weights (the default), variants whose dot with the draft
    centroid is negative get weight zero; if every weight vanishes the draft
    centroid itself is returned, normalized.
    """
    Z = as_matrix(features, "features")
    if Z.shape[0] < 1:
        raise DimensionMismatchError("need at least one prompt feature")
    draft = np.mean(Z, axis=0)
    weights = Z @ draft
    if not raw_weights:
        weights = np.maximum(weights, 0.0)
        if not np.any(weights > 0.0):
            return l2_normalize(draft)
    fused = weights @ Z
    return l2_normalize(fused)


def vision_ensemble(features, pseudo_labels, num_classes: int) -> list:
    """Per-class unit centroids of view features grouped by pseudo label.

    Returns a list of length ``num_classes`` whose entry is ``None`` for
    classes that received no views.
    """
    Z = as_matrix(features, "features")
    y = as_labels(pseudo_labels, "pseudo_labels", length=Z.shape[0])
    if num_classes < 1:
        raise ConfigError(f"num_classes must be positive, got {num_classes}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise BadLabelError(f"pseudo labels must lie in [0, {num_classes})")
    centroids = []
    for m in range(num_classes):
        members = Z[y == m]
        if members.shape[0] == 0:
            centroids.append(None)
        else:
            centroids.append(l2_normalize(np.mean(members, axis=0)))
    return centroids


def init_fused(text_centroids, image_centroids) -> np.ndarray:
    """Initial fused centroids: normalize(text + image), class by class.

    Every class must have an image centroid; a missing one raises
    :class:`MissingCentroidError`.
    """
    T = as_matrix(text_centroids, "text_centroids")
    if len(image_centroids) != T.shape[0]:
        raise DimensionMismatchError(
            f"expected {T.shape[0]} image centroids, got {len(image_centroids)}"
        )
    fused = np.empty_like(T)
    for m, centroid in enumerate(image_centroids):
        if centroid is None:
            raise MissingCentroidError(f"class {m} has no image centroid")
        fused[m] = l2_normalize(T[m] + as_vector(centroid, "image centroid", dim=T.shape[1]))
    return fused


def temporal_update(fused, new_image_centroids, lam: float) -> np.ndarray:
    """EMA step ``normalize(lam * fused + (1 - lam) * new)`` per class.

    Classes whose new image centroid is ``None`` keep their fused centroid
    unchanged.  ``lam`` is the retention factor in [0, 1].
    """
    F = as_matrix(fused, "fused")
    if not 0.0 <= float(lam) <= 1.0:
        raise ConfigError(f"lam must lie in [0, 1], got {lam!r}")
    if len(new_image_centroids) != F.shape[0]:
        raise DimensionMismatchError(
            f"expected {F.shape[0]} image centroids, got {len(new_image_centroids)}"
        )
    out = F.copy()
    for m, centroid in enumerate(new_image_centroids):
        if centroid is None:
            continue
        c = as_vector(centroid, "image centroid", dim=F.shape[1])
        out[m] = l2_normalize(lam * F[m] + (1.0 - lam) * c)
    return out


# -- averaging baselines --------------------------------------------------

def baseline_uniform(features) -> np.ndarray:
    """Plain mean of the prompt features, normalized."""
    Z = as_matrix(features, "features")
    if Z.shape[0] < 1:
        raise DimensionMismatchError("need at least one prompt feature")
    return l2_normalize(np.mean(Z, axis=0))


def baseline_weighted(features) -> np.ndarray:
    """Softmax-weighted mean: weights are softmax of agreement with the draft."""
    Z = as_matrix(features, "features")
    if Z.shape[0] < 1:
        raise DimensionMismatchError("need at least one prompt feature")
    draft = np.mean(Z, axis=0)
    sims = Z @ draft
    sims = sims - np.max(sims)
    w = np.exp(sims)
    w /= np.sum(w)
    return l2_normalize(w @ Z)


def baseline_majority_vote(view_labels, view_scores, num_classes: int) -> int:
    """Plurality label over per-view votes.

    Ties on the count are broken by the larger summed score, then by the
    lower class index.
    """
    y = as_labels(view_labels, "view_labels")
    s = as_vector(view_scores, "view_scores", dim=y.shape[0])
    if y.shape[0] < 1:
        raise DimensionMismatchError("need at least one vote")
    if num_classes < 1:
        raise ConfigError(f"num_classes must be positive, got {num_classes}")
    if y.min() < 0 or y.max() >= num_classes:
        raise BadLabelError(f"view labels must lie in [0, {num_classes})")
    counts = np.bincount(y, minlength=num_classes)
    sums = np.bincount(y, weights=s, minlength=num_classes)
    best = int(np.max(counts))
    candidates = np.nonzero(counts == best)[0]
    return int(min(candidates, key=lambda m: (-sums[m], m)))


@dataclass
class CentroidBank:
    """Running per-class centroid state for temporally fused self-training.

    Holds the frozen text centroids, the most recent per-class image
    centroids (``None`` until a class has been seen), and the fused centroids
    consumed by pseudo-labeling.
    """

    text_centroids: np.ndarray
    lam: float
    image_centroids: list = field(default_factory=list)
    fused: np.ndarray | None = None

    @classmethod
    def create(cls, text_centroids, lam: float) -> "CentroidBank":
        T = as_matrix(text_centroids, "text_centroids")
        if not 0.0 <= float(lam) <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {lam!r}")
        return cls(text_centroids=T.copy(), lam=float(lam), image_centroids=[None] * T.shape[0])

    @property
    def num_classes(self) -> int:
        return self.text_centroids.shape[0]

    def initialize_fused(self, image_centroids) -> None:
        """Cold-start fusion; classes with no image centroid fall back to text."""
        if len(image_centroids) != self.num_classes:
            raise DimensionMismatchError(
                f"expected {self.num_classes} image centroids, got {len(image_centroids)}"
            )
        effective = []
        for m, centroid in enumerate(image_centroids):
            if centroid is None:
                effective.append(self.text_centroids[m])
            else:
                effective.append(centroid)
                self.image_centroids[m] = np.array(centroid, dtype=np.float64)
        self.fused = init_fused(self.text_centroids, effective)

    def apply_temporal(self, new_image_centroids) -> None:
        if self.fused is None:
            raise MissingCentroidError("bank has no fused centroids; initialize first")
        self.fused = temporal_update(self.fused, new_image_centroids, self.lam)
        for m, centroid in enumerate(new_image_centroids):
            if centroid is not None:
                self.image_centroids[m] = np.array(centroid, dtype=np.float64)

    def dump_csv(self, path) -> None:
        """Per-class CSV of the fused centroid components."""
        if self.fused is None:
            raise MissingCentroidError("bank has no fused centroids; initialize first")
        dim = self.fused.shape[1]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("class_index," + ",".join(f"c{i}" for i in range(dim)) + "\n")
            for m in range(self.num_classes):
                fh.write(str(m) + "," + ",".join(repr(float(v)) for v in self.fused[m]) + "\n")
