"""Linear encoders with L2-normalized outputs, analytic gradients, and an EMA twin.

An encoder maps a raw input vector ``x`` to the unit feature
``normalize(W x + b)``.  The backward pass projects the upstream gradient onto
the tangent space of the unit sphere before chaining through the affine map:
with ``u = W x + b``, ``n = ||u||`` and ``z = u / n``,

    dL/du = (dL/dz - (z . dL/dz) z) / n
    dL/dW = dL/du x^T        dL/db = dL/du

Checkpoints are versioned JSON records whose float values round-trip
bit-exactly (Python serializes doubles with shortest-repr which parses back to
the identical bits).
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConfigError,
    CorruptFileError,
    DimensionMismatchError,
    FormatVersionError,
    ZeroNormError,
)
from .validation import as_matrix, as_vector

CHECKPOINT_FORMAT_VERSION = 1
ROLES = ("image", "text")

_NORM_FLOOR = 1e-12


@dataclass
class EncoderGradient:
    """Gradients of some scalar loss with respect to encoder parameters."""

    d_weight: np.ndarray
    d_bias: np.ndarray


class LinearEncoder:
    """Affine map followed by L2 normalization onto the unit sphere.

    Parameters are held as float64 arrays; ``weight`` has shape
    ``(out_dim, in_dim)`` and ``bias`` shape ``(out_dim,)``.  ``role`` tags the
    modality ("image" or "text") and is carried through checkpoints.
    """

    def __init__(self, weight, bias, role: str):
        W = as_matrix(weight, "weight")
        b = as_vector(bias, "bias", dim=W.shape[0])
        if W.shape[0] < 2:
            raise ConfigError(f"out_dim must be at least 2, got {W.shape[0]}")
        if role not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {role!r}")
        self.weight = W.copy()
        self.bias = b.copy()
        self.role = role

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, role: str, rng: np.random.Generator):
        """Fresh encoder with uniform(-1/sqrt(in_dim), 1/sqrt(in_dim)) weights, zero bias."""
        if in_dim < 1:
            raise ConfigError(f"in_dim must be positive, got {in_dim}")
        bound = 1.0 / np.sqrt(in_dim)
        weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        return cls(weight, np.zeros(out_dim), role)

    def copy(self) -> "LinearEncoder":
        return LinearEncoder(self.weight, self.bias, self.role)

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by name, for the optimizer."""
        return {"weight": self.weight, "bias": self.bias}

    def param_hash(self) -> str:
        """SHA-256 over the raw parameter bytes; equal iff parameters are bit-equal."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.weight).tobytes())
        h.update(np.ascontiguousarray(self.bias).tobytes())
        return h.hexdigest()

    # -- forward ---------------------------------------------------------

    def encode(self, x) -> np.ndarray:
        """Unit feature for a single input vector."""
        xv = as_vector(x, "x", dim=self.in_dim)
        u = self.weight @ xv + self.bias
        n = float(np.linalg.norm(u))
        if n <= _NORM_FLOOR:
            raise ZeroNormError(f"pre-normalization output has norm {n:.3e}")
        return u / n

    def encode_batch(self, X) -> np.ndarray:
        """Unit features for the rows of ``X``, shape (n, out_dim)."""
        Xm = as_matrix(X, "X", cols=self.in_dim)
        U = Xm @ self.weight.T + self.bias
        norms = np.linalg.norm(U, axis=1)
        bad = np.nonzero(norms <= _NORM_FLOOR)[0]
        if bad.size:
            raise ZeroNormError(
                f"pre-normalization output of row {bad[0]} has norm {norms[bad[0]]:.3e}"
            )
        return U / norms[:, None]

    # -- backward --------------------------------------------------------

    def encode_backward(self, x, upstream) -> EncoderGradient:
        """Parameter gradients for one input given dL/d(feature)."""
        xv = as_vector(x, "x", dim=self.in_dim)
        up = as_vector(upstream, "upstream", dim=self.out_dim)
        u = self.weight @ xv + self.bias
        n = float(np.linalg.norm(u))
        if n <= _NORM_FLOOR:
            raise ZeroNormError(f"pre-normalization output has norm {n:.3e}")
        z = u / n
        g = (up - float(z @ up) * z) / n
        return EncoderGradient(d_weight=np.outer(g, xv), d_bias=g)

    def encode_batch_backward(self, X, upstream) -> EncoderGradient:
        """Parameter gradients summed over a batch of inputs."""
        Xm = as_matrix(X, "X", cols=self.in_dim)
        Up = as_matrix(upstream, "upstream", cols=self.out_dim)
        if Xm.shape[0] != Up.shape[0]:
            raise DimensionMismatchError(
                f"X and upstream must agree on batch size, got {Xm.shape[0]} vs {Up.shape[0]}"
            )
        U = Xm @ self.weight.T + self.bias
        norms = np.linalg.norm(U, axis=1)
        bad = np.nonzero(norms <= _NORM_FLOOR)[0]
        if bad.size:
            raise ZeroNormError(
                f"pre-normalization output of row {bad[0]} has norm {norms[bad[0]]:.3e}"
            )
        Z = U / norms[:, None]
        G = (Up - np.sum(Z * Up, axis=1, keepdims=True) * Z) / norms[:, None]
        return EncoderGradient(d_weight=G.T @ Xm, d_bias=np.sum(G, axis=0))

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        """Write a versioned JSON checkpoint; floats round-trip bit-exactly."""
        record = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "record": "linear-encoder",
            "role": self.role,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearEncoder":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                record = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError) as err:
            raise CorruptFileError(f"not a valid encoder checkpoint: {err}") from err
        if not isinstance(record, dict) or record.get("record") != "linear-encoder":
            raise CorruptFileError("not an encoder checkpoint record")
        version = record.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise FormatVersionError(
                f"unsupported checkpoint format version {version!r}, "
                f"expected {CHECKPOINT_FORMAT_VERSION}"
            )
        try:
            enc = cls(record["weight"], record["bias"], record["role"])
        except KeyError as err:
            raise CorruptFileError(f"checkpoint missing field {err}") from err
        if enc.in_dim != record.get("in_dim") or enc.out_dim != record.get("out_dim"):
            raise CorruptFileError("checkpoint dimensions disagree with stored arrays")
        return enc


class MomentumEncoder:
    """Exponential-moving-average shadow of an online :class:`LinearEncoder`.

    ``update`` pulls the shadow toward the online parameters:
    ``p_shadow <- m * p_shadow + (1 - m) * p_online``.
    """

    def __init__(self, encoder: LinearEncoder, momentum: float):
        m = float(momentum)
        if not 0.0 <= m < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum!r}")
        self.encoder = encoder.copy()
        self.momentum = m

    @classmethod
    def from_online(cls, online: LinearEncoder, momentum: float) -> "MomentumEncoder":
        return cls(online, momentum)

    def update(self, online: LinearEncoder) -> None:
        if online.weight.shape != self.encoder.weight.shape:
            raise DimensionMismatchError(
                "online encoder shape does not match the shadow copy"
            )
        m = self.momentum
        self.encoder.weight *= m
        self.encoder.weight += (1.0 - m) * online.weight
        self.encoder.bias *= m
        self.encoder.bias += (1.0 - m) * online.bias

    def encode(self, x) -> np.ndarray:
        return self.encoder.encode(x)

    def encode_batch(self, X) -> np.ndarray:
        return self.encoder.encode_batch(X)
