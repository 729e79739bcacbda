"""S1 front end: grayscale conversion, image pyramid, Gabor filtering and
intensity-to-latency coding with a per-location orientation winner-take-all.

Images are plain 2-D ``float64`` arrays with values in [0, 1], indexed
``[row, col]``. Angles are measured from the +col axis towards +row.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError

SCALES = (1.00, 0.71, 0.50, 0.30, 0.25)
ORIENTATIONS = tuple(math.pi / 8 + k * math.pi / 4 for k in range(4))
KERNEL_SIZE = 5
WAVELENGTH = 5.0
MIN_SIDE = KERNEL_SIZE

LUMA = np.array([0.299, 0.587, 0.114])
MIN_RESPONSE = 1.0 / np.finfo(np.float64).max


@dataclass(frozen=True)
class EncoderConfig:
    """Free parameters of the S1 stage.

    ``phase`` is ``"sine"`` (antisymmetric, edge detector) or ``"cosine"``
    (symmetric, bar detector). ``response_floor`` is the |response| a cell
    must strictly exceed to emit a spike.
    """

    sigma: float = 2.0
    gamma: float = 0.5
    phase: str = "sine"
    wavelength: float = WAVELENGTH
    response_floor: float = 0.0
    scales: tuple[float, ...] = field(default=SCALES)

    def __post_init__(self):
        if self.phase not in ("sine", "cosine"):
            raise InvalidInputError(f"phase must be 'sine' or 'cosine', got {self.phase!r}")
        if self.sigma <= 0 or self.gamma <= 0 or self.wavelength <= 0:
            raise InvalidInputError("sigma, gamma and wavelength must be positive")
        if self.response_floor < 0:
            raise InvalidInputError("response_floor must be >= 0")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if any(a <= b for a, b in zip(self.scales, self.scales[1:])):
            raise InvalidInputError("scales must be strictly descending")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        if "scales" in d:
            d["scales"] = tuple(d["scales"])
        return cls(**d)


class SpikeEvent(NamedTuple):
    latency: float
    scale: int
    map: int
    row: int
    col: int


@dataclass
class SpikeWave:
    """Latency-ordered spike events stored column-wise.

    ``shapes[s]`` is the (rows, cols) extent of every map at scale ``s``;
    it is kept even when a scale emits no events so downstream layers know
    the geometry. ``n_maps`` is the number of maps per scale.
    """

    latency: np.ndarray
    scale: np.ndarray
    map: np.ndarray
    row: np.ndarray
    col: np.ndarray
    shapes: tuple[tuple[int, int], ...]
    n_maps: int = 4

    @classmethod
    def from_arrays(cls, latency, scale, map, row, col, shapes, n_maps=4) -> "SpikeWave":
        """Build a wave from unordered event columns, applying the canonical sort."""
        latency = np.asarray(latency, dtype=np.float64)
        cols = [np.asarray(a, dtype=np.int64) for a in (scale, map, row, col)]
        if latency.size and (not np.all(np.isfinite(latency)) or latency.min() < 0):
            raise InvalidInputError("latencies must be finite and nonnegative")
        order = np.lexsort((cols[3], cols[2], cols[1], cols[0], latency))
        shapes = tuple((int(h), int(w)) for h, w in shapes)
        return cls(latency[order], *(c[order] for c in cols), shapes=shapes, n_maps=n_maps)

    @classmethod
    def from_events(cls, events: Sequence, shapes, n_maps=4) -> "SpikeWave":
        if len(events) == 0:
            return cls.empty(shapes, n_maps)
        lat, s, m, r, c = zip(*events)
        return cls.from_arrays(lat, s, m, r, c, shapes, n_maps)

    @classmethod
    def empty(cls, shapes, n_maps=4) -> "SpikeWave":
        z = np.zeros(0, dtype=np.int64)
        return cls(np.zeros(0), z, z.copy(), z.copy(), z.copy(),
                   tuple((int(h), int(w)) for h, w in shapes), n_maps)

    def __len__(self) -> int:
        return int(self.latency.size)

    def __iter__(self) -> Iterator[SpikeEvent]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> SpikeEvent:
        return SpikeEvent(float(self.latency[i]), int(self.scale[i]), int(self.map[i]),
                          int(self.row[i]), int(self.col[i]))

    def addresses(self) -> list[tuple[int, int, int, int]]:
        return list(zip(self.scale.tolist(), self.map.tolist(), self.row.tolist(), self.col.tolist()))

    def at_scale(self, s: int) -> "SpikeWave":
        keep = self.scale == s
        return SpikeWave(self.latency[keep], self.scale[keep], self.map[keep],
                         self.row[keep], self.col[keep], self.shapes, self.n_maps)

    def latency_maps(self, s: int) -> np.ndarray:
        """Dense ``(n_maps, rows, cols)`` latencies at scale ``s``; ``inf`` where silent."""
        h, w = self.shapes[s]
        out = np.full((self.n_maps, h, w), np.inf)
        keep = self.scale == s
        out[self.map[keep], self.row[keep], self.col[keep]] = self.latency[keep]
        return out


def to_grayscale(image) -> np.ndarray:
    """Luminance of an ``(H, W)``, ``(H, W, 1)``, ``(H, W, 3)`` or ``(H, W, 4)`` image.

    Channels are expected in [0, 1]; alpha is ignored. Gray input is
    returned unchanged apart from clamping.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("empty image")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 3:
        if arr.shape[2] not in (3, 4):
            raise InvalidInputError(f"unsupported channel count {arr.shape[2]}")
        r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
        # b + wr(r - b) + wg(g - b) equals the weighted sum, and is exact for gray pixels
        arr = b + LUMA[0] * (r - b) + LUMA[1] * (g - b)
    elif arr.ndim != 2:
        raise InvalidInputError(f"expected a 2-D or 3-D image, got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def check_gray(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"gray image must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
        raise InvalidInputError(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than {MIN_SIDE}x{MIN_SIDE}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
        raise InvalidInputError("pixel values must be finite and in [0, 1]")
    return arr


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def level_shape(shape: tuple[int, int], factor: float) -> tuple[int, int]:
    return _round_half_up(factor * shape[0]), _round_half_up(factor * shape[1])


def _resize_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in:
        return arr.copy()
    # pixel-centre alignment; a + t * (b - a) keeps constants and power-of-two gains exact
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    t = src - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_out
    return a + t.reshape(shape) * (b - a)


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return _resize_axis(_resize_axis(np.asarray(img, dtype=np.float64), shape[0], 0), shape[1], 1)


def build_pyramid(img, scales: Sequence[float] = SCALES) -> list[np.ndarray]:
    """Bilinear multi-scale copies of ``img`` at the given descending factors."""
    img = check_gray(img)
    levels = []
    for k, factor in enumerate(scales):
        shape = level_shape(img.shape, factor)
        if min(shape) < MIN_SIDE:
            raise InvalidInputError(
                f"pyramid level {k} (factor {factor:.2f}) would be {shape[1]}x{shape[0]}, "
                f"below the {MIN_SIDE}x{MIN_SIDE} minimum; input is {img.shape[1]}x{img.shape[0]}"
            )
        levels.append(resize_bilinear(img, shape))
    return levels


def gabor_kernel(theta: float, config: EncoderConfig = EncoderConfig()) -> np.ndarray:
    """One zero-mean, unit-norm 5x5 Gabor kernel preferring edges/bars at ``theta``."""
    half = KERNEL_SIZE // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    across = -x * math.sin(theta) + y * math.cos(theta)
    along = x * math.cos(theta) + y * math.sin(theta)
    envelope = np.exp(-(across ** 2 + config.gamma ** 2 * along ** 2) / (2 * config.sigma ** 2))
    if config.phase == "sine":
        k = envelope * np.sin(2 * math.pi * across / config.wavelength)
        # exact point antisymmetry: zero mean without a floating-point residue
        k = (k - k[::-1, ::-1]) / 2
    else:
        k = envelope * np.cos(2 * math.pi * across / config.wavelength)
        k = k - k.mean()
    return k / np.sqrt(np.sum(k * k))


def make_gabor_bank(config: EncoderConfig = EncoderConfig()) -> np.ndarray:
    """Kernels for the four orientations, shape ``(4, 5, 5)``."""
    return np.stack([gabor_kernel(t, config) for t in ORIENTATIONS])


def s1_responses(level, bank: np.ndarray) -> np.ndarray:
    """Absolute valid-region correlation of ``level`` with each kernel.

    Returns shape ``(n_kernels, h - 4, w - 4)``. Each patch is referenced to
    its centre pixel before the dot product; for zero-mean kernels this is
    the same correlation but flat patches give exactly 0.
    """
    level = np.asarray(level, dtype=np.float64)
    if level.ndim != 2 or min(level.shape) < KERNEL_SIZE:
        raise InvalidInputError(f"level of shape {level.shape} cannot hold a {KERNEL_SIZE}x{KERNEL_SIZE} kernel")
    half = KERNEL_SIZE // 2
    win = sliding_window_view(level, (KERNEL_SIZE, KERNEL_SIZE))
    centred = win - win[:, :, half:half + 1, half:half + 1]
    return np.abs(np.einsum("rcij,kij->krc", centred, bank))


def encode_wave(pyramid: Sequence[np.ndarray], bank: np.ndarray, response_floor: float = 0.0) -> SpikeWave:
    """S1 spike wave: one spike per location for the best orientation, latency 1/|response|."""
    lat, sc, mp, rr, cc, shapes = [], [], [], [], [], []
    for s, level in enumerate(pyramid):
        resp = s1_responses(level, bank)
        shapes.append(resp.shape[1:])
        best = np.argmax(resp, axis=0)
        value = np.take_along_axis(resp, best[None], axis=0)[0]
        # responses so small that 1/v overflows are rounding residue, not signal
        r, c = np.nonzero(value > max(response_floor, MIN_RESPONSE))
        lat.append(1.0 / value[r, c])
        sc.append(np.full(r.size, s))
        mp.append(best[r, c])
        rr.append(r)
        cc.append(c)
    if not shapes:
        return SpikeWave.empty((), bank.shape[0])
    return SpikeWave.from_arrays(np.concatenate(lat), np.concatenate(sc), np.concatenate(mp),
                                 np.concatenate(rr), np.concatenate(cc), shapes, bank.shape[0])


def encode_image(img, config: EncoderConfig = EncoderConfig(), bank: np.ndarray | None = None) -> SpikeWave:
    """Pyramid + Gabor bank + S1 wave for one gray image.

    The image is referenced to its minimum first. Zero-mean kernels make
    this a no-op mathematically; numerically it makes a constant offset
    cancel before interpolation, so quantized images give bit-identical
    waves under offsets and power-of-two gains.
    """
    img = check_gray(img)
    bank = make_gabor_bank(config) if bank is None else bank
    return encode_wave(build_pyramid(img - img.min(), config.scales), bank, config.response_floor)
