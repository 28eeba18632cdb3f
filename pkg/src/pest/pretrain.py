"""Contrastive pretraining of the paired image and text encoders.

The objective is the bidirectional tempered cross-entropy over the batch
cosine matrix: each image must pick out its paired text among the batch texts
and vice versa, averaged over pairs.  Training follows AdamW with a per-epoch
cosine learning-rate schedule.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .encoders import LinearEncoder
from .exceptions import ConfigError, DimensionMismatchError
from .linalg import softmax_cross_entropy_batch
from .optim import AdamW, CosineSchedule
from .rng import stream
from .validation import as_matrix


def contrastive_loss(image_features, text_features, temperature: float = 0.07):
    """Bidirectional contrastive loss over matched feature rows.

    Row ``i`` of each input is one pair.  The loss is the mean over pairs of
    the image-to-text and text-to-image cross-entropies on the tempered
    cosine matrix.  Returns ``(loss, d_image_features, d_text_features)``.
    """
    ZI = as_matrix(image_features, "image_features")
    ZT = as_matrix(text_features, "text_features")
    if ZI.shape != ZT.shape:
        raise DimensionMismatchError(
            f"feature blocks must share a shape, got {ZI.shape} vs {ZT.shape}"
        )
    n = ZI.shape[0]
    if n < 2:
        raise DimensionMismatchError(f"need at least 2 pairs, got {n}")
    sims = ZI @ ZT.T
    idx = np.arange(n)
    losses_i2t, grads_i2t = softmax_cross_entropy_batch(sims, idx, temperature)
    losses_t2i, grads_t2i = softmax_cross_entropy_batch(sims.T, idx, temperature)
    loss = float(np.mean(losses_i2t + losses_t2i))
    d_sims = (grads_i2t + grads_t2i.T) / n
    return loss, d_sims @ ZT, d_sims.T @ ZI


@dataclass
class PretrainConfig:
    """Hyperparameters for one pretraining run."""

    embed_dim: int = 16
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.01
    weight_decay: float = 0.05
    temperature: float = 0.07
    min_lr: float = 0.0

    def __post_init__(self):
        for name in ("embed_dim", "epochs", "batch_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive int, got {value!r}")
            setattr(self, name, int(value))
        if self.embed_dim < 2:
            raise ConfigError(f"embed_dim must be at least 2, got {self.embed_dim}")
        if not float(self.learning_rate) > 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not float(self.weight_decay) >= 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if not float(self.temperature) > 0.0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature!r}")
        if not 0.0 <= float(self.min_lr) <= float(self.learning_rate):
            raise ConfigError(f"min_lr must lie in [0, learning_rate], got {self.min_lr!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PretrainConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"pretrain config must be a mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown pretrain config keys: {', '.join(unknown)}")
        return cls(**data)


class ContrastivePretrainer(BaseEstimator):
    """Fits paired linear encoders on (image, text) rows, sklearn style.

    Parameters mirror :class:`PretrainConfig`, plus ``random_state`` which
    seeds initialization and epoch shuffling.

    Attributes
    ----------
    image_encoder_ : LinearEncoder
    text_encoder_ : LinearEncoder
    history_ : list of dict
        Per-epoch ``{"epoch", "loss"}`` records.
    """

    def __init__(
        self,
        embed_dim=16,
        epochs=40,
        batch_size=64,
        learning_rate=0.01,
        weight_decay=0.05,
        temperature=0.07,
        min_lr=0.0,
        random_state=0,
    ):
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.temperature = temperature
        self.min_lr = min_lr
        self.random_state = random_state

    def _config(self) -> PretrainConfig:
        return PretrainConfig(
            embed_dim=self.embed_dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            temperature=self.temperature,
            min_lr=self.min_lr,
        )

    def fit(self, X, Y, epoch_callback=None):
        """Train on paired rows: ``X`` holds images, ``Y`` the matching texts.

        ``epoch_callback(epoch, image_encoder, text_encoder, mean_loss)`` runs
        after every epoch, for callers that track extra diagnostics.
        """
        cfg = self._config()
        X = as_matrix(X, "X")
        Y = as_matrix(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(
                f"X and Y must pair up row by row, got {X.shape[0]} vs {Y.shape[0]} rows"
            )
        if X.shape[0] < 2:
            raise DimensionMismatchError(f"need at least 2 pairs, got {X.shape[0]}")

        image_encoder = LinearEncoder.initialize(
            X.shape[1], cfg.embed_dim, "image", stream(self.random_state, "pretrain/init-image")
        )
        text_encoder = LinearEncoder.initialize(
            Y.shape[1], cfg.embed_dim, "text", stream(self.random_state, "pretrain/init-text")
        )
        opt_image = AdamW(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        opt_text = AdamW(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        schedule = CosineSchedule(cfg.learning_rate, cfg.epochs, cfg.min_lr)
        rng_shuffle = stream(self.random_state, "pretrain/shuffle")

        n = X.shape[0]
        history = []
        for epoch in range(1, cfg.epochs + 1):
            lr = schedule.lr_at(epoch - 1)
            order = rng_shuffle.permutation(n)
            batch_losses = []
            for start in range(0, n, cfg.batch_size):
                rows = order[start : start + cfg.batch_size]
                if rows.shape[0] < 2:
                    continue  # a lone trailing pair has no contrastive signal
                Xb, Yb = X[rows], Y[rows]
                ZI = image_encoder.encode_batch(Xb)
                ZT = text_encoder.encode_batch(Yb)
                loss, d_zi, d_zt = contrastive_loss(ZI, ZT, cfg.temperature)
                grad_image = image_encoder.encode_batch_backward(Xb, d_zi)
                grad_text = text_encoder.encode_batch_backward(Yb, d_zt)
                opt_image.apply(
                    image_encoder.params(),
                    {"weight": grad_image.d_weight, "bias": grad_image.d_bias},
                    lr=lr,
                )
                opt_text.apply(
                    text_encoder.params(),
                    {"weight": grad_text.d_weight, "bias": grad_text.d_bias},
                    lr=lr,
                )
                batch_losses.append(loss)
            mean_loss = float(np.mean(batch_losses))
            history.append({"epoch": epoch, "loss": mean_loss})
            if epoch_callback is not None:
                epoch_callback(epoch, image_encoder, text_encoder, mean_loss)

        self.image_encoder_ = image_encoder
        self.text_encoder_ = text_encoder
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        """Image features for the rows of ``X``."""
        if not hasattr(self, "image_encoder_"):
            raise NotFittedError(
                "This ContrastivePretrainer instance is not fitted yet; "
                "call fit before using this method."
            )
        return self.image_encoder_.encode_batch(X)


def pretrain_vlm(task, cfg: PretrainConfig, seed: int):
    """Pretrain on the task's source pairs and track source zero-shot accuracy.

    Returns ``(image_encoder, text_encoder, rows)`` where each row is
    ``{"epoch", "loss", "source_zero_shot_acc"}``.
    """
    estimator = ContrastivePretrainer(
        embed_dim=cfg.embed_dim,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        temperature=cfg.temperature,
        min_lr=cfg.min_lr,
        random_state=seed,
    )
    rows = []

    def callback(epoch, image_encoder, text_encoder, mean_loss):
        anchors = text_encoder.encode_batch(task.canonical_prompts)
        feats = image_encoder.encode_batch(task.source_images)
        predictions = np.argmax(feats @ anchors.T, axis=1)
        accuracy = float(np.mean(predictions == task.source_labels))
        rows.append({"epoch": epoch, "loss": mean_loss, "source_zero_shot_acc": accuracy})

    estimator.fit(task.source_images, task.source_texts, epoch_callback=callback)
    return estimator.image_encoder_, estimator.text_encoder_, rows
