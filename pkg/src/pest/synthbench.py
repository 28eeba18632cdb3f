"""Seeded synthetic benchmark for open-vocabulary adaptation in embedding space.

A task starts from near-orthogonal unit concept vectors, one per class.
Source images and texts are noisy linear renders of those concepts.  The
target image domain is shifted by rotating the image render matrix and adding
a scaled offset, so a single knob moves the task from trivially in-domain to
strongly shifted.  Each class additionally gets a set of text prompt variants
with optional injected failures (random unit directions standing in for
degenerate prompt rewrites), plus a canonical class-name render that carries
its own fixed text-noise draw.

Tasks serialize to a versioned binary container: magic bytes, format version,
a JSON header describing the payload, raw little-endian array bytes, and a
trailing SHA-256 over everything before it.
"""

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .exceptions import (
    ConfigError,
    CorruptFileError,
    FormatVersionError,
    ResampleExhaustedError,
    TaskSpecError,
)
from .rng import stream
from .validation import as_matrix, as_vector

TASK_MAGIC = b"PESTTASK"
TASK_FORMAT_VERSION = 1

# Pairwise |cosine| allowed between class concepts, and the draw budget for
# rejection sampling them.
CONCEPT_MAX_COSINE = 0.3
CONCEPT_DRAW_BUDGET = 1000


@dataclass(frozen=True)
class TaskSpec:
    """Full recipe for one synthetic task; two equal specs generate equal tasks."""

    num_classes: int = 10
    concept_dim: int = 16
    input_dim: int = 32
    source_pairs_per_class: int = 50
    target_images_per_class: int = 50
    k_text_prompts: int = 8
    image_noise: float = 0.35
    text_noise: float = 0.55
    shift_strength: float = 0.5
    prompt_failure_rate: float = 0.1
    seed: int = 42

    def __post_init__(self):
        for name in (
            "num_classes",
            "concept_dim",
            "input_dim",
            "source_pairs_per_class",
            "target_images_per_class",
            "k_text_prompts",
            "seed",
        ):
            value = getattr(self, name)
            if int(value) != value:
                raise TaskSpecError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.num_classes < 2:
            raise TaskSpecError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.concept_dim < 2 or self.input_dim < 2:
            raise TaskSpecError("concept_dim and input_dim must be at least 2")
        if self.source_pairs_per_class < 1 or self.target_images_per_class < 1:
            raise TaskSpecError("per-class sample counts must be positive")
        if self.k_text_prompts < 1:
            raise TaskSpecError(f"k_text_prompts must be positive, got {self.k_text_prompts}")
        for name in ("image_noise", "text_noise", "shift_strength"):
            if not float(getattr(self, name)) >= 0.0:
                raise TaskSpecError(f"{name} must be non-negative")
        if not 0.0 <= self.prompt_failure_rate < 1.0:
            raise TaskSpecError(
                f"prompt_failure_rate must lie in [0, 1), got {self.prompt_failure_rate!r}"
            )
        if self.seed < 0:
            raise TaskSpecError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        if not isinstance(data, dict):
            raise TaskSpecError(f"task spec must be a mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise TaskSpecError(f"unknown task spec keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class SyntheticTask:
    """A generated task: arrays plus the spec that produced them.

    ``target_labels`` is ground truth for evaluation only; the adaptation
    loop never receives it (see the engine's argument list).
    """

    spec: TaskSpec
    concepts: np.ndarray          # (M, concept_dim) unit rows
    image_render: np.ndarray      # (input_dim, concept_dim) source image map
    text_render: np.ndarray       # (input_dim, concept_dim) text map
    target_render: np.ndarray     # (input_dim, concept_dim) shifted image map
    source_images: np.ndarray     # (N_s, input_dim)
    source_texts: np.ndarray      # (N_s, input_dim)
    source_labels: np.ndarray     # (N_s,)
    target_images: np.ndarray     # (N_t, input_dim)
    target_labels: np.ndarray     # (N_t,) hidden from adaptation
    class_prompts: np.ndarray     # (M, K, input_dim) prompt variants
    prompt_failure_mask: np.ndarray  # (M, K) bool, True where a variant failed
    canonical_prompts: np.ndarray    # (M, input_dim) class-name renders

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def same_as(self, other: "SyntheticTask") -> bool:
        """Bitwise equality of spec and all arrays."""
        if self.spec != other.spec:
            return False
        for name in _ARRAY_FIELDS:
            if not np.array_equal(getattr(self, name), getattr(other, name)):
                return False
        return True


_ARRAY_FIELDS = (
    "concepts",
    "image_render",
    "text_render",
    "target_render",
    "source_images",
    "source_texts",
    "source_labels",
    "target_images",
    "target_labels",
    "class_prompts",
    "prompt_failure_mask",
    "canonical_prompts",
)


def _sample_concepts(spec: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit concept vectors with pairwise |cosine| <= CONCEPT_MAX_COSINE.

    Vectors are drawn one at a time and redrawn on conflict with any already
    accepted vector; the total draw budget is shared across the set.
    """
    concepts = np.empty((spec.num_classes, spec.concept_dim))
    draws = 0
    accepted = 0
    while accepted < spec.num_classes:
        if draws >= CONCEPT_DRAW_BUDGET:
            raise ResampleExhaustedError(
                f"could not place {spec.num_classes} concepts with pairwise "
                f"|cos| <= {CONCEPT_MAX_COSINE} in {CONCEPT_DRAW_BUDGET} draws"
            )
        draws += 1
        v = rng.normal(size=spec.concept_dim)
        norm = np.linalg.norm(v)
        if norm <= 1e-12:
            continue
        v /= norm
        if accepted and np.max(np.abs(concepts[:accepted] @ v)) > CONCEPT_MAX_COSINE:
            continue
        concepts[accepted] = v
        accepted += 1
    return concepts


def _rotation(input_dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation ``expm(angle * G)`` for a random unit-spectral-norm skew ``G``."""
    raw = rng.normal(size=(input_dim, input_dim))
    skew = 0.5 * (raw - raw.T)
    scale = np.linalg.norm(skew, 2)
    if scale > 0.0:
        skew /= scale
    return expm(angle * skew)


def generate_task(spec: TaskSpec) -> SyntheticTask:
    """Deterministically generate the task described by ``spec``."""
    if not isinstance(spec, TaskSpec):
        raise TaskSpecError(f"spec must be a TaskSpec, got {type(spec).__name__}")
    rng_concepts = stream(spec.seed, "task/concepts")
    rng_render = stream(spec.seed, "task/render")
    rng_source = stream(spec.seed, "task/source-noise")
    rng_target = stream(spec.seed, "task/target-noise")
    rng_prompts = stream(spec.seed, "task/prompts")

    M = spec.num_classes
    concepts = _sample_concepts(spec, rng_concepts)

    image_render = rng_render.normal(size=(spec.input_dim, spec.concept_dim))
    text_render = rng_render.normal(size=(spec.input_dim, spec.concept_dim))
    offset = rng_render.normal(size=(spec.input_dim, spec.concept_dim))
    rotation = _rotation(spec.input_dim, spec.shift_strength, rng_render)
    target_render = rotation @ image_render + spec.shift_strength * offset

    n_src = spec.source_pairs_per_class
    clean_src = concepts @ image_render.T            # (M, input_dim)
    clean_txt = concepts @ text_render.T
    source_images = np.repeat(clean_src, n_src, axis=0)
    source_images += rng_source.normal(scale=spec.image_noise, size=source_images.shape)
    source_texts = np.repeat(clean_txt, n_src, axis=0)
    source_texts += rng_source.normal(scale=spec.text_noise, size=source_texts.shape)
    source_labels = np.repeat(np.arange(M, dtype=np.int64), n_src)

    n_tgt = spec.target_images_per_class
    clean_tgt = concepts @ target_render.T
    target_images = np.repeat(clean_tgt, n_tgt, axis=0)
    target_images += rng_target.normal(scale=spec.image_noise, size=target_images.shape)
    target_labels = np.repeat(np.arange(M, dtype=np.int64), n_tgt)

    K = spec.k_text_prompts
    class_prompts = np.empty((M, K, spec.input_dim))
    prompt_failure_mask = np.zeros((M, K), dtype=bool)
    canonical_prompts = np.empty((M, spec.input_dim))
    for m in range(M):
        canonical_prompts[m] = clean_txt[m] + rng_prompts.normal(
            scale=spec.text_noise, size=spec.input_dim
        )
        for k in range(K):
            variant = clean_txt[m] + rng_prompts.normal(
                scale=spec.text_noise, size=spec.input_dim
            )
            if rng_prompts.random() < spec.prompt_failure_rate:
                direction = rng_prompts.normal(size=spec.input_dim)
                variant = direction / np.linalg.norm(direction)
                prompt_failure_mask[m, k] = True
            class_prompts[m, k] = variant

    return SyntheticTask(
        spec=spec,
        concepts=concepts,
        image_render=image_render,
        text_render=text_render,
        target_render=target_render,
        source_images=source_images,
        source_texts=source_texts,
        source_labels=source_labels,
        target_images=target_images,
        target_labels=target_labels,
        class_prompts=class_prompts,
        prompt_failure_mask=prompt_failure_mask,
        canonical_prompts=canonical_prompts,
    )


# -- augmentation ---------------------------------------------------------

AUGMENT_KINDS = ("jitter", "random_mask", "random_scale")


@dataclass(frozen=True)
class AugmentOp:
    """One augmentation primitive.

    kind "jitter": add isotropic Gaussian noise with std ``amount``.
    kind "random_mask": zero ``round(amount * dim)`` coordinates, chosen
    uniformly without replacement.
    kind "random_scale": multiply by one scalar drawn uniformly from the
    ``(low, high)`` pair in ``amount``.
    """

    kind: str
    amount: object

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ConfigError(f"kind must be one of {AUGMENT_KINDS}, got {self.kind!r}")
        if self.kind == "jitter":
            if not float(self.amount) >= 0.0:
                raise ConfigError(f"jitter std must be >= 0, got {self.amount!r}")
        elif self.kind == "random_mask":
            if not 0.0 <= float(self.amount) <= 1.0:
                raise ConfigError(f"mask fraction must lie in [0, 1], got {self.amount!r}")
        else:
            low, high = self.amount
            if not (float(low) <= float(high) and float(low) > 0.0):
                raise ConfigError(f"scale range must satisfy 0 < low <= high, got {self.amount!r}")


def default_augment_ops() -> tuple[AugmentOp, ...]:
    """The stock view pipeline: mild rescale, jitter, sparse mask, in order."""
    return (
        AugmentOp("random_scale", (0.9, 1.1)),
        AugmentOp("jitter", 0.75),
        AugmentOp("random_mask", 0.2),
    )


def augment(x, op: AugmentOp, rng: np.random.Generator) -> np.ndarray:
    """Apply one augmentation to a single vector, consuming ``rng`` draws."""
    xv = as_vector(x, "x")
    if op.kind == "jitter":
        sigma = float(op.amount)
        if sigma == 0.0:
            return xv.copy()
        return xv + rng.normal(scale=sigma, size=xv.shape[0])
    if op.kind == "random_mask":
        count = int(round(float(op.amount) * xv.shape[0]))
        out = xv.copy()
        if count > 0:
            idx = rng.choice(xv.shape[0], size=count, replace=False)
            out[idx] = 0.0
        return out
    low, high = (float(v) for v in op.amount)
    return xv * rng.uniform(low, high)


def augment_views(X, ops, k_views: int, rng: np.random.Generator) -> np.ndarray:
    """``k_views`` augmented copies of each row of ``X``, stacked view-major.

    Output shape is ``(k_views * n, dim)``; view ``j`` of sample ``i`` sits at
    row ``j * n + i``.  Each view applies the ops in sequence with fresh draws.
    """
    Xm = as_matrix(X, "X")
    if k_views < 1:
        raise ConfigError(f"k_views must be positive, got {k_views}")
    n, dim = Xm.shape
    blocks = []
    for _ in range(k_views):
        block = Xm.copy()
        for op in ops:
            if op.kind == "jitter":
                sigma = float(op.amount)
                if sigma > 0.0:
                    block = block + rng.normal(scale=sigma, size=block.shape)
            elif op.kind == "random_mask":
                count = int(round(float(op.amount) * dim))
                if count > 0:
                    scores = rng.random(size=block.shape)
                    idx = np.argsort(scores, axis=1)[:, :count]
                    block = block.copy()
                    np.put_along_axis(block, idx, 0.0, axis=1)
            else:
                low, high = (float(v) for v in op.amount)
                block = block * rng.uniform(low, high, size=(n, 1))
        blocks.append(block)
    return np.concatenate(blocks, axis=0)


# -- serialization --------------------------------------------------------

_DTYPE_CODES = {"f8": "<f8", "i8": "<i8", "u1": "<u1"}


def _array_code(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "f8"
    if arr.dtype == np.int64:
        return "i8"
    if arr.dtype == np.bool_:
        return "u1"
    raise ConfigError(f"unsupported array dtype {arr.dtype}")


def save_task(task: SyntheticTask, path) -> None:
    """Write the versioned binary task container described in the module docstring."""
    entries = []
    payload = bytearray()
    for name in _ARRAY_FIELDS:
        arr = np.ascontiguousarray(getattr(task, name))
        code = _array_code(arr)
        raw = arr.astype(_DTYPE_CODES[code], copy=False).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        payload.extend(raw)
    header = json.dumps(
        {"spec": task.spec.to_dict(), "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = TASK_MAGIC + struct.pack("<II", TASK_FORMAT_VERSION, len(header)) + header + bytes(payload)
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(digest)


def load_task(path) -> SyntheticTask:
    """Read a task container, verifying magic, version, and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    min_len = len(TASK_MAGIC) + 8 + 32
    if len(blob) < min_len or not blob.startswith(TASK_MAGIC):
        raise CorruptFileError("not a synthetic task container")
    body, digest = blob[:-32], blob[-32:]
    version, header_len = struct.unpack_from("<II", body, len(TASK_MAGIC))
    if version != TASK_FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported task format version {version}, expected {TASK_FORMAT_VERSION}"
        )
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFileError("task container failed its checksum")
    header_start = len(TASK_MAGIC) + 8
    if header_start + header_len > len(body):
        raise CorruptFileError("task container header is truncated")
    try:
        header = json.loads(body[header_start : header_start + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise CorruptFileError(f"task container header is not valid JSON: {err}") from err
    spec = TaskSpec.from_dict(header["spec"])
    arrays = {}
    cursor = header_start + header_len
    for entry in header["arrays"]:
        dtype = np.dtype(_DTYPE_CODES[entry["dtype"]])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        chunk = body[cursor : cursor + nbytes]
        if len(chunk) != nbytes:
            raise CorruptFileError(f"array {entry['name']!r} is truncated")
        arr = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        if entry["dtype"] == "u1":
            arr = arr.astype(bool)
        arrays[entry["name"]] = arr
        cursor += nbytes
    if cursor != len(body):
        raise CorruptFileError("task container has trailing bytes")
    missing = [name for name in _ARRAY_FIELDS if name not in arrays]
    if missing:
        raise CorruptFileError(f"task container is missing arrays: {', '.join(missing)}")
    return SyntheticTask(spec=spec, **{name: arrays[name] for name in _ARRAY_FIELDS})
