"""C1 first-spike pooling, S2 integrate-to-threshold with weight sharing, C2 readout.

S2 potentials are pure sums of the weights of afferents that have spiked
(no leak). Because lateral inhibition only blocks firing and never alters
potentials, each duplicate's threshold crossing is independent of the
competition; the competition is applied afterwards to the crossings taken
in event order, which is equivalent to resolving it online.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .encoder import SpikeWave

POOL = 7
STRIDE = 6
RF = 16
N_ORIENT = 4
THRESHOLD = 64.0
PROTO_SHAPE = (RF, RF, N_ORIENT)


@dataclass
class Prototype:
    weights: np.ndarray
    threshold: float = THRESHOLD
    post_spike_count: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != PROTO_SHAPE:
            raise ValueError(f"prototype weights must have shape {PROTO_SHAPE}, got {self.weights.shape}")


@dataclass
class S2Firing:
    """One S2 duplicate crossing threshold.

    ``row``/``col`` anchor the 16x16 receptive field in C1 coordinates.
    ``event_index`` is the position in the C1 wave of the spike that
    caused the crossing. ``contributing_pre`` flags the afferents (row,
    col, orientation within the field) that spiked at or before
    ``latency``; it is derived from the wave on first access.
    """

    prototype: int
    scale: int
    row: int
    col: int
    latency: float
    event_index: int
    potential: float
    wave: SpikeWave | None = field(default=None, repr=False, compare=False)
    _pre: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def contributing_pre(self) -> np.ndarray:
        if self._pre is None:
            lat = self.wave.latency_maps(self.scale)[:, self.row:self.row + RF, self.col:self.col + RF]
            self._pre = (lat <= self.latency).transpose(1, 2, 0)
        return self._pre

    def sort_key(self):
        return (self.latency, self.event_index, self.scale, self.prototype, self.row, self.col)


def c1_shape(s1_shape: tuple[int, int]) -> tuple[int, int]:
    return tuple(max(0, (d - POOL) // STRIDE + 1) for d in s1_shape)


def c1_pool(wave: SpikeWave) -> SpikeWave:
    """First spike in each 7x7 window (stride 6) of every S1 map."""
    lat, sc, mp, rr, cc, shapes = [], [], [], [], [], []
    for s, s1_shape in enumerate(wave.shapes):
        shape = c1_shape(s1_shape)
        shapes.append(shape)
        if 0 in shape:
            continue
        maps = wave.latency_maps(s)
        win = sliding_window_view(maps, (POOL, POOL), axis=(1, 2))[:, ::STRIDE, ::STRIDE]
        first = win.min(axis=(-2, -1))[:, :shape[0], :shape[1]]
        m, r, c = np.nonzero(np.isfinite(first))
        lat.append(first[m, r, c])
        sc.append(np.full(m.size, s))
        mp.append(m)
        rr.append(r)
        cc.append(c)
    if not lat:
        return SpikeWave.empty(shapes, wave.n_maps)
    return SpikeWave.from_arrays(np.concatenate(lat), np.concatenate(sc), np.concatenate(mp),
                                 np.concatenate(rr), np.concatenate(cc), shapes, wave.n_maps)


def stack_weights(prototypes: Sequence[Prototype]) -> np.ndarray:
    return np.stack([p.weights for p in prototypes]) if prototypes else np.zeros((0,) + PROTO_SHAPE)


def _windows(maps: np.ndarray) -> np.ndarray:
    """``(n_anchor_rows, n_anchor_cols, 16, 16, 4)`` view of ``(4, H, W)`` maps."""
    win = sliding_window_view(maps, (RF, RF), axis=(1, 2))
    return win.transpose(1, 2, 3, 4, 0)


def potential_maps(c1_wave: SpikeWave, weights: np.ndarray) -> list[np.ndarray]:
    """Infinite-threshold potentials per scale, each of shape ``(P, rows, cols)``.

    Scales whose C1 maps are smaller than the receptive field give an
    array with zero anchors.
    """
    n = weights.shape[0]
    flat_w = weights.reshape(n, -1)
    out = []
    for s, (h, w) in enumerate(c1_wave.shapes):
        nr, nc = h - RF + 1, w - RF + 1
        if nr <= 0 or nc <= 0:
            out.append(np.zeros((n, 0, 0)))
            continue
        active = np.isfinite(c1_wave.latency_maps(s)).astype(np.float64)
        x = _windows(active).reshape(nr * nc, -1)
        out.append((x @ flat_w.T).T.reshape(n, nr, nc))
    return out


def c2_by_scale(c1_wave: SpikeWave, prototypes) -> np.ndarray:
    """Per-scale maximum potential, shape ``(n_scales, P)``; 0 where a scale has no anchors."""
    weights = prototypes if isinstance(prototypes, np.ndarray) else stack_weights(prototypes)
    maps = potential_maps(c1_wave, weights)
    out = np.zeros((len(maps), weights.shape[0]))
    for s, m in enumerate(maps):
        if m.shape[1] and m.shape[2]:
            out[s] = m.reshape(m.shape[0], -1).max(axis=1)
    return out


def c2_potentials(c1_wave: SpikeWave, prototypes) -> np.ndarray:
    """C2 vector: for each prototype, the best whole-wave potential over all placements."""
    by_scale = c2_by_scale(c1_wave, prototypes)
    if by_scale.shape[0] == 0:
        n = prototypes.shape[0] if isinstance(prototypes, np.ndarray) else len(prototypes)
        return np.zeros(n)
    return by_scale.max(axis=0)


def s2_candidates(c1_wave: SpikeWave, prototypes: Sequence[Prototype]) -> list[S2Firing]:
    """First threshold crossing of every S2 duplicate, in event order.

    Each duplicate adds its weight for every afferent spike in wave order;
    the crossing is the first event at which the running sum reaches the
    threshold. Ties between duplicates crossing on the same event are
    ordered by (scale, prototype, row, col).
    """
    if not prototypes:
        return []
    weights = stack_weights(prototypes)
    thresholds = np.array([p.threshold for p in prototypes])
    flat_w = weights.reshape(len(prototypes), -1)
    finals = potential_maps(c1_wave, weights)
    n_events = len(c1_wave)
    cols = {k: [] for k in ("lat", "ev", "scale", "proto", "row", "col", "pot")}
    for s, final in enumerate(finals):
        if final.size == 0:
            continue
        # loose prefilter on the matmul result; the exact decision uses the running sum below
        live = final >= thresholds[:, None, None] - 1e-6
        anchor_live = live.any(axis=0)
        if not anchor_live.any():
            continue
        h, w = c1_wave.shapes[s]
        index_map = np.full((N_ORIENT, h, w), n_events, dtype=np.int64)
        keep = np.flatnonzero(c1_wave.scale == s)
        index_map[c1_wave.map[keep], c1_wave.row[keep], c1_wave.col[keep]] = keep
        a_row, a_col = np.nonzero(anchor_live)
        idx_win = _windows(index_map)[a_row, a_col].reshape(a_row.size, -1)
        # afferents of each field in wave order, shared by all prototypes
        order = np.argsort(idx_win, axis=1)
        idx_sorted = np.take_along_axis(idx_win, order, axis=1)
        silent = idx_sorted >= n_events
        for p in range(len(prototypes)):
            sel = np.flatnonzero(live[p, a_row, a_col])
            if sel.size == 0:
                continue
            w_sorted = flat_w[p][order[sel]]
            w_sorted[silent[sel]] = 0.0
            running = np.cumsum(w_sorted, axis=1)
            reached = running >= thresholds[p]
            hit = np.flatnonzero(reached[:, -1])
            pos = np.argmax(reached[hit], axis=1)
            anchors = sel[hit]
            ev = idx_sorted[anchors, pos]
            cols["ev"].append(ev)
            cols["lat"].append(c1_wave.latency[ev])
            cols["scale"].append(np.full(hit.size, s))
            cols["proto"].append(np.full(hit.size, p))
            cols["row"].append(a_row[anchors])
            cols["col"].append(a_col[anchors])
            cols["pot"].append(running[hit, pos])
    if not cols["ev"]:
        return []
    c = {k: np.concatenate(v) for k, v in cols.items()}
    order = np.lexsort((c["col"], c["row"], c["proto"], c["scale"], c["ev"], c["lat"]))
    return [
        S2Firing(prototype=p, scale=s, row=r, col=cc, latency=lat, event_index=ev, potential=pot, wave=c1_wave)
        for lat, ev, s, p, r, cc, pot in zip(*(c[k][order].tolist() for k in ("lat", "ev", "scale", "proto", "row", "col", "pot")))
    ]


def global_wta(candidates: Sequence[S2Firing]) -> list[S2Firing]:
    """Keep only the first crossing of each prototype."""
    seen = set()
    out = []
    for f in candidates:
        if f.prototype not in seen:
            seen.add(f.prototype)
            out.append(f)
    return out


def s2_propagate_learning(
    c1_wave: SpikeWave,
    prototypes: Sequence[Prototype],
    competition: Callable[[list[S2Firing]], list[S2Firing]] = global_wta,
) -> list[S2Firing]:
    """S2 firings for one image under a competition rule (default: per-prototype WTA)."""
    return competition(s2_candidates(c1_wave, prototypes))
