"""Unsupervised STDP training of S2 prototypes."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .encoder import EncoderConfig, SpikeWave, encode_image
from .errors import InvalidInputError, NonConvergenceError
from .network import PROTO_SHAPE, THRESHOLD, Prototype, S2Firing, c1_pool, s2_propagate_learning

log = logging.getLogger(__name__)

A_PLUS_INIT = 2.0 ** -6
A_PLUS_MAX = 2.0 ** -2
DOUBLING_PERIOD = 400
RATIO = -4.0 / 3.0  # a_plus / a_minus


@dataclass(frozen=True)
class TrainConfig:
    n_prototypes: int = 4
    target_spikes: int = 600
    k_wta: int = 2
    inhibition_radius: int = 5
    seed: int = 0
    max_epochs: int = 10_000

    def __post_init__(self):
        if self.n_prototypes < 1:
            raise InvalidInputError("n_prototypes must be >= 1")
        if self.target_spikes < 1:
            raise InvalidInputError("target_spikes must be >= 1")
        if self.k_wta < 1:
            raise InvalidInputError("k_wta must be >= 1")
        if self.inhibition_radius < 0:
            raise InvalidInputError("inhibition_radius must be >= 0")
        if self.max_epochs < 1:
            raise InvalidInputError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def init_prototypes(n: int, seed: int, mean: float = 0.8, std: float = 0.05) -> list[Prototype]:
    if n < 1:
        raise InvalidInputError("need at least one prototype")
    rng = np.random.default_rng(seed)
    w = np.clip(rng.normal(mean, std, size=(n,) + PROTO_SHAPE), 0.0, 1.0)
    return [Prototype(w[i], THRESHOLD, 0) for i in range(n)]


def lr_schedule(post_spike_count: int) -> tuple[float, float]:
    """(a_plus, a_minus) after ``post_spike_count`` postsynaptic spikes."""
    if post_spike_count < 0:
        raise InvalidInputError("spike count must be >= 0")
    doublings = min(post_spike_count // DOUBLING_PERIOD, 4)
    a_plus = min(A_PLUS_INIT * 2.0 ** doublings, A_PLUS_MAX)
    return a_plus, a_plus / RATIO


def stdp_update(w, pre_fired_before_post, a_plus: float, a_minus: float):
    """Sign-only multiplicative STDP.

    ``pre_fired_before_post`` is True where the presynaptic spike came at or
    before the postsynaptic one; afferents that did not spike count as late.
    Works elementwise on scalars or arrays.
    """
    w = np.asarray(w, dtype=np.float64)
    rate = np.where(pre_fired_before_post, a_plus, a_minus)
    out = np.clip(w + rate * w * (1.0 - w), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def resolve_competition(candidates: Sequence[S2Firing], config: TrainConfig) -> list[S2Firing]:
    """Accept candidates in order under global WTA, local inhibition and per-scale k-WTA."""
    accepted: list[S2Firing] = []
    fired = set()
    per_scale: dict[int, list[S2Firing]] = {}
    r = config.inhibition_radius
    for f in candidates:
        if f.prototype in fired:
            continue
        same_scale = per_scale.setdefault(f.scale, [])
        if len(same_scale) >= config.k_wta:
            continue
        if any(max(abs(f.row - g.row), abs(f.col - g.col)) <= r for g in same_scale):
            continue
        accepted.append(f)
        fired.add(f.prototype)
        same_scale.append(f)
    return accepted


def learn_from_wave(c1_wave: SpikeWave, prototypes: list[Prototype], config: TrainConfig) -> list[S2Firing]:
    """Present one C1 wave: compete, then apply STDP to each winner in place."""
    winners = s2_propagate_learning(c1_wave, prototypes, lambda c: resolve_competition(c, config))
    for f in winners:
        proto = prototypes[f.prototype]
        a_plus, a_minus = lr_schedule(proto.post_spike_count)
        proto.weights = stdp_update(proto.weights, f.contributing_pre, a_plus, a_minus)
        proto.post_spike_count += 1
    return winners


def train(
    images: Sequence,
    config: TrainConfig = TrainConfig(),
    encoder: EncoderConfig = EncoderConfig(),
    prototypes: list[Prototype] | None = None,
    progress: Callable[[int, list[Prototype]], None] | None = None,
) -> list[Prototype]:
    """Train prototypes on ``images`` until each has ``target_spikes`` post-spikes.

    ``images`` is a sequence of gray images or of precomputed C1 waves.
    Each epoch visits every image once in a fresh order drawn from
    ``(seed, epoch)``. ``progress`` is called after every epoch.
    Raises :class:`NonConvergenceError` when ``max_epochs`` is exhausted.
    """
    if len(images) == 0:
        raise InvalidInputError("training set is empty")
    waves = [im if isinstance(im, SpikeWave) else c1_pool(encode_image(im, encoder)) for im in images]
    if prototypes is None:
        prototypes = init_prototypes(config.n_prototypes, config.seed)
    for epoch in range(config.max_epochs):
        if min(p.post_spike_count for p in prototypes) >= config.target_spikes:
            break
        order = np.random.default_rng([config.seed, epoch]).permutation(len(waves))
        for i in order:
            learn_from_wave(waves[i], prototypes, config)
            if min(p.post_spike_count for p in prototypes) >= config.target_spikes:
                break
        log.debug("epoch %d spike counts %s", epoch, [p.post_spike_count for p in prototypes])
        if progress is not None:
            progress(epoch, prototypes)
    counts = [p.post_spike_count for p in prototypes]
    if min(counts) < config.target_spikes:
        raise NonConvergenceError(
            f"training stopped after {config.max_epochs} epochs with spike counts {counts} "
            f"(target {config.target_spikes})",
            counts,
        )
    return prototypes
