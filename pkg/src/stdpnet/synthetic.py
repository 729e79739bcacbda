"""Seeded synthetic corpora on low-contrast noise clutter.

Two kinds of images: one of two oriented grating patterns (for checking
that STDP prototypes lock onto a single pattern) and line-drawn shapes
of four classes (for end-to-end classification). Strokes are
anti-aliased from line segments, so every image is a deterministic
function of the generator seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import gaussian_filter

from .encoder import EncoderConfig, encode_image
from .network import RF, STRIDE, c1_pool

BACKGROUND_LEVEL = 0.4

Segment = tuple[float, float, float, float]  # (x0, y0, x1, y1) relative to the shape centre

SHAPE_CLASSES = ("circle", "corner", "cross", "tjunction")

# Base rotation per class. Strokes lie along Gabor orientations; the cross
# uses the other two so that no class is a sub-drawing of another
# (a "+" would contain a T-junction).
CLASS_ROTATION = {"circle": 0.0, "corner": math.pi / 8, "cross": 3 * math.pi / 8, "tjunction": math.pi / 8}


def _line(theta: float, length: float, offset=(0.0, 0.0)) -> Segment:
    dx, dy = math.cos(theta) * length / 2, math.sin(theta) * length / 2
    ox, oy = offset
    return (ox - dx, oy - dy, ox + dx, oy + dy)


def shape_segments(name: str, size: float, rotation: float = 0.0) -> list[Segment]:
    """Line segments of a named shape, ``size`` pixels across, centred at the origin."""
    t = rotation
    if name == "cross":
        segs = [_line(t, size), _line(t + math.pi / 2, size)]
    elif name == "tjunction":
        top = _line(t, size, (-math.sin(t) * size / 2, math.cos(t) * size / 2))
        stem = _line(t + math.pi / 2, size)
        segs = [top, stem]
    elif name == "corner":
        h = size / 2
        c = (-h * math.cos(t) + h * math.sin(t), -h * math.sin(t) - h * math.cos(t))
        a = (c[0] + size * math.cos(t), c[1] + size * math.sin(t))
        b = (c[0] - size * math.sin(t), c[1] + size * math.cos(t))
        segs = [(c[0], c[1], a[0], a[1]), (c[0], c[1], b[0], b[1])]
    elif name == "circle":
        n = 24
        r = size / 2
        pts = [(r * math.cos(2 * math.pi * k / n), r * math.sin(2 * math.pi * k / n)) for k in range(n + 1)]
        segs = [(x0, y0, x1, y1) for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
    else:
        raise ValueError(f"unknown shape {name!r}")
    return segs


def render_strokes(shape: tuple[int, int], segments, center, thickness: float = 3.0) -> np.ndarray:
    """Coverage mask in [0, 1] of thick strokes drawn at ``center`` = (x, y)."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = center
    dist = np.full(shape, np.inf)
    for x0, y0, x1, y1 in segments:
        ax, ay, bx, by = x0 + cx, y0 + cy, x1 + cx, y1 + cy
        vx, vy = bx - ax, by - ay
        den = vx * vx + vy * vy
        t = np.clip(((xx - ax) * vx + (yy - ay) * vy) / den, 0.0, 1.0) if den else 0.0
        d = np.hypot(xx - (ax + t * vx), yy - (ay + t * vy))
        np.minimum(dist, d, out=dist)
    return np.clip(thickness / 2 + 0.5 - dist, 0.0, 1.0)


def noise_background(shape: tuple[int, int], rng: np.random.Generator, level: float = BACKGROUND_LEVEL,
                     contrast: float = 0.05, smooth: float = 1.0) -> np.ndarray:
    """Low-contrast smoothed noise clutter around ``level``."""
    n = gaussian_filter(rng.standard_normal(shape), smooth)
    n /= n.std() or 1.0
    return np.clip(level + contrast * n, 0.0, 1.0)


def composite(background: np.ndarray, mask: np.ndarray, value: float = 0.95) -> np.ndarray:
    return background * (1.0 - mask) + value * mask


@dataclass
class SyntheticImage:
    image: np.ndarray
    label: str
    center: tuple[float, float]
    size: float
    rotation: float


def grating_mask(shape: tuple[int, int], theta: float, center, length: float = 64.0, n_bars: int = 6,
                 width: float = 3.0, gap: float = 3.0, taper: float = 14.0) -> np.ndarray:
    """``n_bars`` parallel bars along ``theta`` whose ends fade out smoothly.

    Closely spaced bars keep the off-orientation flank responses of each
    edge below the on-orientation response of its neighbour, and the
    tapered ends keep cross-orientation edges weak, so nearly every strong
    S1 response shares the bars' orientation.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    x, y = xx - center[0], yy - center[1]
    along = x * math.cos(theta) + y * math.sin(theta)
    across = -x * math.sin(theta) + y * math.cos(theta)
    t = np.clip((length / 2 - np.abs(along)) / taper, 0.0, 1.0)
    fade = 0.5 - 0.5 * np.cos(math.pi * t)
    bars = np.zeros(shape)
    for k in range(n_bars):
        off = (k - (n_bars - 1) / 2) * (width + gap)
        np.maximum(bars, np.clip(width / 2 + 0.5 - np.abs(across - off), 0.0, 1.0), out=bars)
    return bars * fade


# Corpus defaults. The background clutter stays below RESPONSE_FLOOR in S1
# (its largest response is about 0.38), so only the drawn strokes spike.
NOISE_CONTRAST = 0.05
RESPONSE_FLOOR = 0.5
PATTERN_LENGTH = 80.0
# the two sizes differ by the pyramid's second scale factor
SHAPE_SIZES = (56.0, 80.0)

# the two patterns run along perpendicular Gabor orientations, so their
# strong C1 afferents fall in disjoint orientation channels
PATTERN_ANGLES = (math.pi / 8, 5 * math.pi / 8)


def make_pattern_image(which: int, rng: np.random.Generator, shape=(224, 224), length: float = PATTERN_LENGTH,
                       margin: int = 6, contrast: float = NOISE_CONTRAST) -> SyntheticImage:
    """One of two fixed grating patterns at a random position on noise."""
    h, w = shape
    half = length / 2 + margin
    cx = float(rng.uniform(half, w - half))
    cy = float(rng.uniform(half, h - half))
    bg = noise_background(shape, rng, contrast=contrast)
    mask = grating_mask(shape, PATTERN_ANGLES[which], (cx, cy), length)
    return SyntheticImage(composite(bg, mask), f"pattern{which}", (cx, cy), length, PATTERN_ANGLES[which])


def make_shape_image(label: str, rng: np.random.Generator, shape=(224, 224), sizes=SHAPE_SIZES,
                     max_rotation: float = math.pi / 32, contrast: float = NOISE_CONTRAST,
                     thickness: float = 3.0) -> SyntheticImage:
    """A named shape at a random position, one of ``sizes``, slightly rotated from its base pose."""
    h, w = shape
    size = float(sizes[rng.integers(len(sizes))])
    rot = CLASS_ROTATION.get(label, 0.0) + float(rng.uniform(-max_rotation, max_rotation))
    half = size / 2 + 6
    cx = float(rng.uniform(half, w - half))
    cy = float(rng.uniform(half, h - half))
    bg = noise_background(shape, rng, contrast=contrast)
    mask = render_strokes(shape, shape_segments(label, size, rot), (cx, cy), thickness)
    return SyntheticImage(composite(bg, mask), label, (cx, cy), size, rot)


def pattern_corpus(n: int, seed: int, **kw) -> list[SyntheticImage]:
    """``n`` images alternating between the two patterns."""
    rng = np.random.default_rng(seed)
    return [make_pattern_image(i % 2, rng, **kw) for i in range(n)]


def shape_corpus(n_per_class: int, seed: int, classes=SHAPE_CLASSES, **kw) -> list[SyntheticImage]:
    """``n_per_class`` images of each class, interleaved by class."""
    rng = np.random.default_rng(seed)
    return [make_shape_image(c, rng, **kw) for _ in range(n_per_class) for c in classes]


def pattern_footprints(which: int, encoder: EncoderConfig | None = None, shape=(224, 224),
                       length: float = PATTERN_LENGTH) -> list[np.ndarray]:
    """C1 footprints of a pattern as boolean 16x16x4 receptive-field windows.

    The pattern is drawn alone on a flat background at every sub-stride
    offset (6x6); each placement contributes every receptive-field window
    of every scale with S2 anchors. The result is one ``(n, 16, 16, 4)``
    array per (offset, scale).
    """
    encoder = EncoderConfig(response_floor=RESPONSE_FLOOR) if encoder is None else encoder
    out = []
    for dy in range(STRIDE):
        for dx in range(STRIDE):
            center = (shape[1] / 2 + dx, shape[0] / 2 + dy)
            mask = grating_mask(shape, PATTERN_ANGLES[which], center, length)
            img = composite(np.full(shape, BACKGROUND_LEVEL), mask)
            c1 = c1_pool(encode_image(img, encoder))
            for s, (h, w) in enumerate(c1.shapes):
                if h < RF or w < RF:
                    continue
                active = np.isfinite(c1.latency_maps(s))
                win = sliding_window_view(active, (RF, RF), axis=(1, 2)).transpose(1, 2, 3, 4, 0)
                out.append(win.reshape(-1, RF, RF, active.shape[0]))
    return out


def best_jaccard(support: np.ndarray, footprints: list[np.ndarray]) -> float:
    """Largest Jaccard index between ``support`` and any footprint window."""
    sup = np.asarray(support, dtype=bool).reshape(-1)
    best = 0.0
    for wins in footprints:
        flat = wins.reshape(wins.shape[0], -1)
        inter = (flat & sup).sum(axis=1)
        union = (flat | sup).sum(axis=1)
        j = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
        best = max(best, float(j.max()))
    return best
