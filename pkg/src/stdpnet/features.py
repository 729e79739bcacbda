"""C2 feature extraction, the random-prototype baseline and preferred-stimulus reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .encoder import KERNEL_SIZE, ORIENTATIONS, EncoderConfig, SpikeWave, encode_image, make_gabor_bank
from .errors import InvalidInputError, StdpnetError
from .network import POOL, PROTO_SHAPE, RF, STRIDE, THRESHOLD, Prototype, c1_pool, c2_potentials, stack_weights

RANDOM_ACTIVE_MEAN = 253.0
RANDOM_ACTIVE_STD = 21.0
META_FIELDS = ("instance", "view", "scale", "tilt")


@dataclass
class FeatureMatrix:
    """C2 features, one row per image and one column per prototype.

    ``meta`` holds one dict per row with the manifest fields in
    ``META_FIELDS``; ``errors`` lists ``(row, message)`` for images that
    could not be read (their rows are left at zero).
    """

    values: np.ndarray
    labels: list[str]
    meta: list[dict] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidInputError("feature values must be a 2-D array")
        if len(self.labels) != self.values.shape[0]:
            raise InvalidInputError("one label per feature row is required")
        if not self.meta:
            self.meta = [{} for _ in self.labels]
        if len(self.meta) != len(self.labels):
            raise InvalidInputError("one metadata entry per feature row is required")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidInputError("feature values must be finite and nonnegative")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def ok(self) -> bool:
        return not self.errors

    def subset(self, rows) -> "FeatureMatrix":
        rows = list(rows)
        return FeatureMatrix(self.values[rows], [self.labels[i] for i in rows], [self.meta[i] for i in rows])


def image_features(img, prototypes, encoder: EncoderConfig = EncoderConfig(), bank=None) -> np.ndarray:
    """C2 vector of one gray image (or of an already encoded C1 wave)."""
    if isinstance(img, SpikeWave):
        return c2_potentials(img, prototypes)
    return c2_potentials(c1_pool(encode_image(img, encoder, bank)), prototypes)


def extract_features(
    images: Sequence,
    prototypes: Sequence[Prototype],
    encoder: EncoderConfig = EncoderConfig(),
    labels: Sequence[str] | None = None,
    meta: Sequence[dict] | None = None,
    loader: Callable[[object], np.ndarray] | None = None,
) -> FeatureMatrix:
    """C2 features for every image; prototypes are only read.

    Items of ``images`` are gray arrays, C1 waves, or anything ``loader``
    turns into a gray array (for instance a file path). A failing item is
    recorded in ``errors`` and extraction carries on.
    """
    weights = stack_weights(list(prototypes))
    bank = make_gabor_bank(encoder)
    rows = np.zeros((len(images), weights.shape[0]))
    errors = []
    for i, item in enumerate(images):
        try:
            img = item if isinstance(item, (np.ndarray, SpikeWave)) or loader is None else loader(item)
            rows[i] = image_features(img, weights, encoder, bank)
        except (OSError, ValueError, StdpnetError) as exc:
            errors.append((i, f"{type(exc).__name__}: {exc}"))
    labels = [str(x) for x in labels] if labels is not None else [""] * len(images)
    return FeatureMatrix(rows, labels, [dict(m) for m in meta] if meta is not None else [], errors)


def random_prototypes(n: int, seed: int, mean: float = RANDOM_ACTIVE_MEAN, std: float = RANDOM_ACTIVE_STD) -> list[Prototype]:
    """Baseline prototypes with a matched number of active weights.

    Each gets N ~ round(Normal(mean, std)) nonzero weights, clamped to
    [1, 1024], at distinct random positions, with values uniform in (0, 1].
    """
    if n < 1:
        raise InvalidInputError("need at least one prototype")
    rng = np.random.default_rng(seed)
    size = int(np.prod(PROTO_SHAPE))
    out = []
    for _ in range(n):
        k = int(np.clip(np.rint(rng.normal(mean, std)), 1, size))
        flat = np.zeros(size)
        flat[rng.choice(size, k, replace=False)] = 1.0 - rng.random(k)
        out.append(Prototype(flat.reshape(PROTO_SHAPE), THRESHOLD, 0))
    return out


# image-space extent of one prototype at scale 1.0
CANVAS_SIDE = RF * STRIDE + KERNEL_SIZE


def bar_kernel(theta: float, size: int = KERNEL_SIZE) -> np.ndarray:
    """Anti-aliased one-pixel line through the kernel centre along ``theta``."""
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    across = -x * math.sin(theta) + y * math.cos(theta)
    return np.clip(1.0 - np.abs(across), 0.0, 1.0)


def cell_center(index: int) -> int:
    """Image-space pixel at the centre of a scale-1.0 C1 cell."""
    return STRIDE * index + POOL // 2 + KERNEL_SIZE // 2


def reconstruct_raw(weights: np.ndarray, orientations: Sequence[float] = ORIENTATIONS) -> np.ndarray:
    """Weighted sum of oriented bars at C1 cell centres, before normalization."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != PROTO_SHAPE:
        raise InvalidInputError(f"weights must have shape {PROTO_SHAPE}")
    canvas = np.zeros((CANVAS_SIDE, CANVAS_SIDE))
    half = KERNEL_SIZE // 2
    for o, theta in enumerate(orientations):
        bar = bar_kernel(theta)
        for r, c in zip(*np.nonzero(weights[:, :, o])):
            y, x = cell_center(r), cell_center(c)
            canvas[y - half:y + half + 1, x - half:x + half + 1] += weights[r, c, o] * bar
    return canvas


def reconstruct_preferred(prototype, orientations: Sequence[float] = ORIENTATIONS) -> np.ndarray:
    """Preferred-stimulus sketch of a prototype, min-max scaled to [0, 1].

    A constant canvas (for instance an all-zero prototype) maps to zeros.
    """
    w = prototype.weights if isinstance(prototype, Prototype) else prototype
    canvas = reconstruct_raw(w, orientations)
    lo, hi = canvas.min(), canvas.max()
    if hi - lo <= 0:
        return np.zeros_like(canvas)
    return (canvas - lo) / (hi - lo)
