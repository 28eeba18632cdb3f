"""Self-training adaptation of the image encoder on unlabeled target data.

The text encoder stays frozen throughout; only the image encoder trains.
Pseudo-labels come either from plain cosine argmax against the deployed
per-class text features, or, in the fused modes, from the product of the text
similarity and the similarity to a fused image-text centroid.  Both factors
are clamped at zero by default so a negative similarity vetoes a class
instead of flipping the score's sign; ``raw_product`` keeps the literal
product for comparison.

The training engine (:func:`_run_unlabelled_adaptation`) takes only unlabeled
arrays; ground-truth target labels never appear in its signature.  Metrics
that need them are computed by :func:`adapt` in a pure per-epoch hook.

Mode vocabulary:

========================  ====================================================
zero_shot                 no training, single evaluation of the pretrained model
st                        vanilla self-training on canonical class prompts
st_vpe                    + per-batch vision-fused centroids for pseudo-labels
st_lpe                    + language-ensembled text features
st_vpe_lpe                both ensembles, still without temporal memory
pest                      both ensembles plus the temporal centroid bank
baseline_uniform          st with uniformly averaged prompt features
baseline_weighted         st with softmax-weighted averaged prompt features
baseline_vote             st with per-variant majority-vote pseudo-labels
========================  ====================================================
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .encoders import LinearEncoder, MomentumEncoder
from .ensembles import (
    CentroidBank,
    baseline_majority_vote,
    baseline_uniform,
    baseline_weighted,
    language_ensemble,
    vision_ensemble,
)
from .exceptions import BadLabelError, ConfigError, PestError
from .linalg import l2_normalize, softmax_cross_entropy_batch
from .metrics import MetricsRow
from .optim import AdamW, CosineSchedule
from .rng import stream
from .synthbench import augment_views, default_augment_ops
from .validation import as_labels, as_matrix, as_vector

MODES = (
    "zero_shot",
    "st",
    "st_vpe",
    "st_lpe",
    "st_vpe_lpe",
    "pest",
    "baseline_uniform",
    "baseline_weighted",
    "baseline_vote",
)
LPE_MODES = frozenset({"st_lpe", "st_vpe_lpe", "pest"})
FUSED_MODES = frozenset({"st_vpe", "st_vpe_lpe", "pest"})


@dataclass
class AdaptConfig:
    """Hyperparameters for one adaptation run."""

    mode: str
    tau: float = 0.01
    lam: float = 0.99
    momentum: float = 0.99
    epochs: int = 30
    batch_size: int = 64
    k_views: int = 4
    learning_rate: float = 1e-5
    weight_decay: float = 0.05
    min_lr: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not float(self.tau) > 0.0:
            raise ConfigError(f"tau must be > 0, got {self.tau!r}")
        if not 0.0 <= float(self.lam) <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam!r}")
        if not 0.0 <= float(self.momentum) < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        for name in ("epochs", "batch_size", "k_views"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive int, got {value!r}")
            setattr(self, name, int(value))
        if not float(self.learning_rate) > 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not float(self.weight_decay) >= 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if not 0.0 <= float(self.min_lr) <= float(self.learning_rate):
            raise ConfigError(
                f"min_lr must lie in [0, learning_rate], got {self.min_lr!r}"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AdaptConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"adapt config must be a mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown adapt config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class PseudoLabel:
    """One pseudo-labeled sample: its index, assigned class, and score."""

    sample_index: int
    label: int
    score: float


def zero_shot_scores(image_feature, text_features) -> np.ndarray:
    """Cosine scores of one image feature against per-class text features."""
    z = as_vector(image_feature, "image_feature")
    T = as_matrix(text_features, "text_features", cols=z.shape[0])
    return T @ z


def st_pseudo_label(image_feature, text_features, sample_index: int = 0) -> PseudoLabel:
    """Vanilla pseudo-label: argmax text similarity, ties to the lowest index."""
    scores = zero_shot_scores(image_feature, text_features)
    label = int(np.argmax(scores))
    return PseudoLabel(sample_index=int(sample_index), label=label, score=float(scores[label]))


def pest_pseudo_label(
    image_feature,
    text_features,
    fused_centroids,
    sample_index: int = 0,
    raw_product: bool = False,
) -> PseudoLabel:
    """Centroid-prompted pseudo-label.

    Scores each class by the product of the text similarity and the fused
    centroid similarity, both clamped at zero unless ``raw_product``.  Ties
    break toward the higher text similarity, then the lower class index.
    """
    z = as_vector(image_feature, "image_feature")
    T = as_matrix(text_features, "text_features", cols=z.shape[0])
    F = as_matrix(fused_centroids, "fused_centroids", cols=z.shape[0])
    if F.shape[0] != T.shape[0]:
        raise BadLabelError(
            f"text and fused centroid counts differ: {T.shape[0]} vs {F.shape[0]}"
        )
    text_sims = T @ z
    fused_sims = F @ z
    if raw_product:
        scores = text_sims * fused_sims
    else:
        scores = np.maximum(text_sims, 0.0) * np.maximum(fused_sims, 0.0)
    order = np.lexsort((np.arange(scores.shape[0]), -text_sims, -scores))
    label = int(order[0])
    return PseudoLabel(sample_index=int(sample_index), label=label, score=float(scores[label]))


def self_training_loss(image_features, text_features, labels, tau: float):
    """Mean tempered cross-entropy of image-text cosine logits at the labels.

    Serves both the vanilla and the centroid-prompted objectives; only the
    label source differs between them.  Returns ``(loss, d_image_features)``;
    gradients flow to the image side only.
    """
    Z = as_matrix(image_features, "image_features")
    T = as_matrix(text_features, "text_features", cols=Z.shape[1])
    y = as_labels(labels, "labels", length=Z.shape[0])
    logits = Z @ T.T
    losses, grads = softmax_cross_entropy_batch(logits, y, tau)
    loss = float(np.mean(losses))
    d_image = (grads / Z.shape[0]) @ T
    return loss, d_image


# -- batch labelers -------------------------------------------------------

def _argmax_labels(scores: np.ndarray) -> np.ndarray:
    return np.argmax(scores, axis=1).astype(np.int64)


def _pest_labels(Z, T, F, raw_product: bool) -> np.ndarray:
    text_sims = Z @ T.T
    fused_sims = Z @ F.T
    if raw_product:
        scores = text_sims * fused_sims
    else:
        scores = np.maximum(text_sims, 0.0) * np.maximum(fused_sims, 0.0)
    idx = np.broadcast_to(np.arange(T.shape[0]), scores.shape)
    order = np.lexsort((idx, -text_sims, -scores))
    return order[:, 0].astype(np.int64)


def _vote_labels(Z, variant_features) -> np.ndarray:
    """Per-sample majority vote across the K per-variant classifiers."""
    M, K, _ = variant_features.shape
    per_view_labels = np.empty((Z.shape[0], K), dtype=np.int64)
    per_view_scores = np.empty((Z.shape[0], K))
    for k in range(K):
        sims = Z @ variant_features[:, k, :].T
        per_view_labels[:, k] = np.argmax(sims, axis=1)
        per_view_scores[:, k] = np.max(sims, axis=1)
    out = np.empty(Z.shape[0], dtype=np.int64)
    for i in range(Z.shape[0]):
        out[i] = baseline_majority_vote(per_view_labels[i], per_view_scores[i], M)
    return out


def _stateless_fuse(text_features: np.ndarray, image_centroids) -> np.ndarray:
    """normalize(text + image) per class; classes without an image centroid
    fall back to their text feature alone."""
    fused = text_features.copy()
    for m, centroid in enumerate(image_centroids):
        if centroid is not None:
            fused[m] = l2_normalize(text_features[m] + centroid)
    return fused


def _batch_pseudo_labels(Z, text_features, variant_features, fused, mode, raw_product):
    if mode in FUSED_MODES:
        return _pest_labels(Z, text_features, fused, raw_product)
    if mode == "baseline_vote":
        return _vote_labels(Z, variant_features)
    return _argmax_labels(Z @ text_features.T)


def deployed_text_features(text_encoder, class_prompts, canonical_prompts, mode, raw_weights=False):
    """Per-class text features the given mode trains against and deploys.

    Returns ``(text_features, variant_features, source)`` where ``source``
    names the construction ("canonical-prompt", "language-ensemble",
    "uniform-average", or "weighted-average").
    """
    prompts = np.asarray(class_prompts, dtype=np.float64)
    if prompts.ndim != 3:
        raise ConfigError(f"class_prompts must be 3-D (classes, variants, dim), got {prompts.shape}")
    M, K, _ = prompts.shape
    variant_features = text_encoder.encode_batch(prompts.reshape(M * K, -1)).reshape(M, K, -1)
    canonical_features = text_encoder.encode_batch(canonical_prompts)
    if canonical_features.shape[0] != M:
        raise ConfigError(
            f"canonical prompt count {canonical_features.shape[0]} does not match "
            f"class count {M}"
        )
    if mode in LPE_MODES:
        text_features = np.stack(
            [language_ensemble(variant_features[m], raw_weights=raw_weights) for m in range(M)]
        )
        source = "language-ensemble"
    elif mode == "baseline_uniform":
        text_features = np.stack([baseline_uniform(variant_features[m]) for m in range(M)])
        source = "uniform-average"
    elif mode == "baseline_weighted":
        text_features = np.stack([baseline_weighted(variant_features[m]) for m in range(M)])
        source = "weighted-average"
    else:
        text_features = canonical_features
        source = "canonical-prompt"
    return text_features, variant_features, source


# -- training engine ------------------------------------------------------

def _run_unlabelled_adaptation(
    images,
    text_features,
    variant_features,
    online: LinearEncoder,
    cfg: AdaptConfig,
    *,
    seed: int,
    eq7_raw_product: bool = False,
    augment_ops=None,
    epoch_hook=None,
):
    """Train ``online`` in place on unlabeled images; labels never enter here.

    Per epoch and batch: build augmented views, encode them with the momentum
    encoder, fuse per-class centroids where the mode calls for it, pseudo-label
    the un-augmented batch through the online encoder, take one optimizer step
    on the tempered cross-entropy, then update the momentum encoder.

    ``epoch_hook(epoch, online, momentum_encoder, bank, mean_loss, lr)`` runs
    after each epoch and must not mutate any of its arguments.
    """
    X = as_matrix(images, "images", cols=online.in_dim)
    T = as_matrix(text_features, "text_features", cols=online.out_dim)
    if cfg.mode == "zero_shot":
        raise ConfigError("zero_shot runs no training; evaluate directly")
    if augment_ops is None:
        augment_ops = default_augment_ops()
    n = X.shape[0]
    num_classes = T.shape[0]

    momentum_encoder = MomentumEncoder.from_online(online, cfg.momentum)
    optimizer = AdamW(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    schedule = CosineSchedule(cfg.learning_rate, cfg.epochs, cfg.min_lr)
    rng_shuffle = stream(seed, "adapt/shuffle")
    rng_augment = stream(seed, "adapt/augment")

    bank = None
    if cfg.mode == "pest":
        # Cold start: one un-augmented pass through the momentum encoder
        # seeds the per-class image centroids and the fused bank.
        feats = momentum_encoder.encode_batch(X)
        labels0 = _argmax_labels(feats @ T.T)
        bank = CentroidBank.create(T, cfg.lam)
        bank.initialize_fused(vision_ensemble(feats, labels0, num_classes))

    uses_fused = cfg.mode in FUSED_MODES
    for epoch in range(1, cfg.epochs + 1):
        lr = schedule.lr_at(epoch - 1)
        order = rng_shuffle.permutation(n)
        batch_losses = []
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            Xb = X[rows]
            try:
                fused = None
                if uses_fused:
                    views = augment_views(Xb, augment_ops, cfg.k_views, rng_augment)
                    view_feats = momentum_encoder.encode_batch(views)
                    view_labels = _argmax_labels(view_feats @ T.T)
                    new_centroids = vision_ensemble(view_feats, view_labels, num_classes)
                    if bank is not None:
                        bank.apply_temporal(new_centroids)
                        fused = bank.fused
                    else:
                        fused = _stateless_fuse(T, new_centroids)
                Zb = online.encode_batch(Xb)
                labels = _batch_pseudo_labels(
                    Zb, T, variant_features, fused, cfg.mode, eq7_raw_product
                )
                loss, d_features = self_training_loss(Zb, T, labels, cfg.tau)
                grad = online.encode_batch_backward(Xb, d_features)
                optimizer.apply(
                    online.params(),
                    {"weight": grad.d_weight, "bias": grad.d_bias},
                    lr=lr,
                )
                momentum_encoder.update(online)
                batch_losses.append(loss)
            except PestError as err:
                raise err.__class__(
                    f"epoch {epoch}, batch {batch_index}: {err}"
                ) from err
        if epoch_hook is not None:
            epoch_hook(epoch, online, momentum_encoder, bank, float(np.mean(batch_losses)), lr)
    return online


@dataclass
class AdaptResult:
    """Outcome of one adaptation run."""

    image_encoder: LinearEncoder
    rows: list
    text_features: np.ndarray
    text_feature_source: str
    mode: str


def adapt(
    task,
    image_encoder: LinearEncoder,
    text_encoder: LinearEncoder,
    cfg: AdaptConfig,
    *,
    seed: int = 0,
    eq4_raw_weights: bool = False,
    eq7_raw_product: bool = False,
    augment_ops=None,
) -> AdaptResult:
    """Adapt a copy of ``image_encoder`` to the task's target images.

    Returns the adapted encoder and per-epoch metrics rows.  Row 0 always
    records the pretrained model's plain zero-shot numbers against the
    canonical prompts, so every mode starts from the same reference point;
    rows 1..epochs use the mode's own deployed text features and labeling
    rule.  Ground-truth labels are read only inside the evaluation hook, never
    by the training engine.
    """
    if image_encoder.role != "image" or text_encoder.role != "text":
        raise ConfigError(
            f"expected (image, text) encoder roles, got "
            f"({image_encoder.role!r}, {text_encoder.role!r})"
        )
    online = image_encoder.copy()
    text_features, variant_features, source = deployed_text_features(
        text_encoder,
        task.class_prompts,
        task.canonical_prompts,
        cfg.mode,
        raw_weights=eq4_raw_weights,
    )
    X = np.asarray(task.target_images, dtype=np.float64)
    truth = np.asarray(task.target_labels)
    canonical_features = text_encoder.encode_batch(task.canonical_prompts)
    schedule = CosineSchedule(cfg.learning_rate, cfg.epochs, cfg.min_lr)

    rows = []
    Z0 = online.encode_batch(X)
    preds0 = _argmax_labels(Z0 @ canonical_features.T)
    acc0 = float(np.mean(preds0 == truth))
    loss0, _ = self_training_loss(Z0, canonical_features, preds0, cfg.tau)
    rows.append(
        MetricsRow(
            epoch=0,
            mode=cfg.mode,
            target_accuracy=acc0,
            pseudo_label_accuracy=acc0,
            mean_loss=loss0,
            lr=schedule.lr_at(0),
        )
    )

    if cfg.mode == "zero_shot":
        return AdaptResult(online, rows, text_features, source, cfg.mode)

    def hook(epoch, online_enc, momentum_enc, bank, mean_loss, lr) -> None:
        Z = online_enc.encode_batch(X)
        preds = _argmax_labels(Z @ text_features.T)
        if cfg.mode in FUSED_MODES:
            if bank is not None:
                fused_eval = bank.fused
            else:
                m_feats = momentum_enc.encode_batch(X)
                m_labels = _argmax_labels(m_feats @ text_features.T)
                fused_eval = _stateless_fuse(
                    text_features, vision_ensemble(m_feats, m_labels, text_features.shape[0])
                )
            pseudo = _pest_labels(Z, text_features, fused_eval, eq7_raw_product)
        elif cfg.mode == "baseline_vote":
            pseudo = _vote_labels(Z, variant_features)
        else:
            pseudo = preds
        rows.append(
            MetricsRow(
                epoch=epoch,
                mode=cfg.mode,
                target_accuracy=float(np.mean(preds == truth)),
                pseudo_label_accuracy=float(np.mean(pseudo == truth)),
                mean_loss=mean_loss,
                lr=lr,
            )
        )

    _run_unlabelled_adaptation(
        X,
        text_features,
        variant_features,
        online,
        cfg,
        seed=seed,
        eq7_raw_product=eq7_raw_product,
        augment_ops=augment_ops,
        epoch_hook=hook,
    )
    return AdaptResult(online, rows, text_features, source, cfg.mode)


class PromptEnsembleSelfTrainer(BaseEstimator):
    """Unsupervised adapter of a pretrained image encoder, sklearn style.

    ``fit`` runs prompt-ensemble self-training on unlabeled inputs;
    ``predict`` classifies by cosine argmax against the deployed per-class
    text features.

    Parameters
    ----------
    image_encoder : LinearEncoder
        Pretrained image encoder; ``fit`` adapts a copy, never the original.
    text_encoder : LinearEncoder
        Pretrained text encoder, frozen throughout.
    class_prompts : ndarray of shape (n_classes, k_variants, in_dim)
        Raw prompt-variant vectors per class.
    canonical_prompts : ndarray of shape (n_classes, in_dim)
        Raw class-name vectors, used when the mode does not ensemble language.
    mode : str, default "pest"
        One of the mode vocabulary entries in the module docstring.
    raw_language_weights : bool, default False
        Keep signed agreement weights in the language fusion.
    raw_product_scores : bool, default False
        Keep the unclamped similarity product in fused pseudo-labeling.
    random_state : int, default 0
        Seeds the shuffle and augmentation streams.

    Other numeric parameters mirror :class:`AdaptConfig` fields.

    Attributes
    ----------
    image_encoder_ : LinearEncoder
        The adapted encoder.
    text_features_ : ndarray of shape (n_classes, embed_dim)
        Deployed per-class text features.
    history_ : list of dict
        Per-epoch ``{"epoch", "mean_loss", "lr"}`` training records.
    """

    def __init__(
        self,
        image_encoder=None,
        text_encoder=None,
        class_prompts=None,
        canonical_prompts=None,
        mode="pest",
        tau=0.01,
        lam=0.99,
        momentum=0.99,
        epochs=30,
        batch_size=64,
        k_views=4,
        learning_rate=1e-5,
        weight_decay=0.05,
        min_lr=0.0,
        raw_language_weights=False,
        raw_product_scores=False,
        random_state=0,
    ):
        self.image_encoder = image_encoder
        self.text_encoder = text_encoder
        self.class_prompts = class_prompts
        self.canonical_prompts = canonical_prompts
        self.mode = mode
        self.tau = tau
        self.lam = lam
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.k_views = k_views
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.min_lr = min_lr
        self.raw_language_weights = raw_language_weights
        self.raw_product_scores = raw_product_scores
        self.random_state = random_state

    def _config(self) -> AdaptConfig:
        return AdaptConfig(
            mode=self.mode,
            tau=self.tau,
            lam=self.lam,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            k_views=self.k_views,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            min_lr=self.min_lr,
        )

    def fit(self, X, y=None):
        """Adapt to the unlabeled rows of ``X``; ``y`` is ignored."""
        for name in ("image_encoder", "text_encoder", "class_prompts", "canonical_prompts"):
            if getattr(self, name) is None:
                raise ConfigError(f"{name} must be provided before fit")
        cfg = self._config()
        X = as_matrix(X, "X", cols=self.image_encoder.in_dim)
        text_features, variant_features, source = deployed_text_features(
            self.text_encoder,
            self.class_prompts,
            self.canonical_prompts,
            cfg.mode,
            raw_weights=self.raw_language_weights,
        )
        online = self.image_encoder.copy()
        history = []
        if cfg.mode != "zero_shot":
            def hook(epoch, online_enc, momentum_enc, bank, mean_loss, lr):
                history.append({"epoch": epoch, "mean_loss": mean_loss, "lr": lr})

            _run_unlabelled_adaptation(
                X,
                text_features,
                variant_features,
                online,
                cfg,
                seed=self.random_state,
                eq7_raw_product=self.raw_product_scores,
                epoch_hook=hook,
            )
        self.image_encoder_ = online
        self.text_features_ = text_features
        self.text_feature_source_ = source
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "image_encoder_"):
            raise NotFittedError(
                "This PromptEnsembleSelfTrainer instance is not fitted yet; "
                "call fit before using this method."
            )

    def decision_function(self, X) -> np.ndarray:
        """Cosine scores of each row of ``X`` against the deployed text features."""
        self._check_fitted()
        X = as_matrix(X, "X", cols=self.image_encoder_.in_dim)
        return self.image_encoder_.encode_batch(X) @ self.text_features_.T

    def predict(self, X) -> np.ndarray:
        """Class labels by argmax cosine score."""
        return _argmax_labels(self.decision_function(X))

    def score(self, X, y) -> float:
        """Mean accuracy of ``predict(X)`` against ``y``."""
        y = as_labels(y, "y")
        return float(np.mean(self.predict(X) == y))
