import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stdpnet.encoder import EncoderConfig, SpikeWave, encode_image
from stdpnet.learning import TrainConfig, resolve_competition
from stdpnet.network import (
    PROTO_SHAPE, RF, Prototype, c1_pool, c1_shape, c2_by_scale, c2_potentials, global_wta, s2_candidates,
    s2_propagate_learning,
)

from oracles import accept_global_wta, c1_from_events, c2_brute, make_accept_competition, s2_rescan


def random_wave(rng, shapes, n_events, n_levels=None):
    """Random C1 wave; ``n_levels`` small forces latency ties."""
    addrs = [(s, m, r, c) for s, (h, w) in enumerate(shapes) for m in range(4) for r in range(h) for c in range(w)]
    pick = rng.choice(len(addrs), size=n_events, replace=False)
    if n_levels:
        lat = rng.integers(1, n_levels + 1, size=n_events).astype(float)
    else:
        lat = rng.random(n_events) + 0.1
    s, m, r, c = zip(*(addrs[i] for i in pick))
    return SpikeWave.from_arrays(lat, s, m, r, c, shapes)


def events_of(wave):
    return [tuple(e) for e in wave]


# -- C1 --------------------------------------------------------------------------------

def test_c1_geometry():
    assert c1_shape((7, 7)) == (1, 1)
    assert c1_shape((13, 12)) == (2, 1)
    assert c1_shape((6, 30)) == (0, 4)


def test_c1_empty_wave():
    assert len(c1_pool(SpikeWave.empty([(20, 20)]))) == 0


def test_c1_single_event_window_arithmetic():
    wave = SpikeWave.from_events([(2.0, 0, 1, 3, 3)], [(20, 20)])
    out = c1_pool(wave)
    assert [tuple(e) for e in out] == [(2.0, 0, 1, 0, 0)]


def test_c1_min_within_window():
    wave = SpikeWave.from_events([(1.0, 0, 2, 1, 1), (3.0, 0, 2, 5, 4)], [(20, 20)])
    assert [tuple(e) for e in c1_pool(wave)] == [(1.0, 0, 2, 0, 0)]


def test_c1_overlap_row_feeds_two_cells():
    # S1 row 6 belongs to C1 rows 0 and 1
    out = c1_pool(SpikeWave.from_events([(1.5, 0, 0, 6, 0)], [(20, 20)]))
    assert sorted((e.row, e.col) for e in out) == [(0, 0), (1, 0)]


@pytest.mark.parametrize("seed", range(4))
def test_c1_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    shapes = [(19, 26), (13, 14)]
    wave = random_wave(rng, shapes, 60, n_levels=5)
    got = {(e.scale, e.map, e.row, e.col): e.latency for e in c1_pool(wave)}
    assert got == c1_from_events(events_of(wave), shapes)


# -- S2 event-driven vs re-scan oracle ----------------------------------------------------

def protos_from(rng, n, threshold):
    return [Prototype(rng.random(PROTO_SHAPE), threshold) for _ in range(n)]


def as_tuples(firings):
    return [(f.prototype, f.scale, f.row, f.col, f.latency) for f in firings]


@pytest.mark.parametrize("seed", range(6))
def test_s2_global_wta_matches_rescan(seed):
    rng = np.random.default_rng(seed)
    shapes = [(18, 17), (16, 16)]
    wave = random_wave(rng, shapes, 180, n_levels=12 if seed % 2 else None)
    protos = protos_from(rng, 3, threshold=12.0 + seed)
    got = as_tuples(s2_propagate_learning(wave, protos))
    want = s2_rescan(events_of(wave), shapes, [p.weights for p in protos], [p.threshold for p in protos],
                     accept_global_wta)
    assert got == want
    assert got, "fixture should produce firings"


@pytest.mark.parametrize("seed", range(4))
def test_s2_full_competition_matches_rescan(seed):
    rng = np.random.default_rng(100 + seed)
    shapes = [(20, 20), (17, 18)]
    wave = random_wave(rng, shapes, 190, n_levels=8)
    protos = protos_from(rng, 4, threshold=10.0)
    cfg = TrainConfig(n_prototypes=4, k_wta=2, inhibition_radius=2)
    got = as_tuples(s2_propagate_learning(wave, protos, lambda c: resolve_competition(c, cfg)))
    want = s2_rescan(events_of(wave), shapes, [p.weights for p in protos], [p.threshold for p in protos],
                     make_accept_competition(2, 2))
    assert got == want


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 150))
def test_s2_rescan_property(seed, n_events):
    rng = np.random.default_rng(seed)
    shapes = [(17, 16)]
    wave = random_wave(rng, shapes, n_events, n_levels=int(rng.integers(3, 30)))
    protos = protos_from(rng, 2, threshold=float(rng.uniform(3, 20)))
    got = as_tuples(s2_propagate_learning(wave, protos))
    want = s2_rescan(events_of(wave), shapes, [p.weights for p in protos], [p.threshold for p in protos],
                     accept_global_wta)
    assert got == want


def test_all_zero_weights_never_fire():
    rng = np.random.default_rng(0)
    wave = random_wave(rng, [(16, 16)], 200)
    assert s2_propagate_learning(wave, [Prototype(np.zeros(PROTO_SHAPE))]) == []


def test_unit_weights_fire_at_64th_spike():
    ev = [(float(k + 1), 0, 0, k // 16, k % 16) for k in range(100)]
    wave = SpikeWave.from_events(ev, [(16, 16)])
    (f,) = s2_propagate_learning(wave, [Prototype(np.ones(PROTO_SHAPE))])
    assert f.latency == 64.0 and f.potential == 64.0
    assert f.contributing_pre.sum() == 64


def test_earlier_copy_wins():
    # the same 64-afferent block at two positions; the right-hand copy arrives first
    ev = []
    for k in range(64):
        r, c = k // 8, k % 8
        ev.append((1.0 + k, 0, 0, r, c))
        ev.append((0.5 + k, 0, 0, r, 30 + c))
    wave = SpikeWave.from_events(ev, [(16, 46)])
    w = np.zeros(PROTO_SHAPE)
    w[:8, :8, 0] = 1.0
    (f,) = s2_propagate_learning(wave, [Prototype(w)])
    assert (f.row, f.col, f.latency) == (0, 30, 63.5)


def test_firing_invariants():
    rng = np.random.default_rng(7)
    wave = random_wave(rng, [(20, 20)], 200)
    for f in s2_candidates(wave, protos_from(rng, 3, 15.0)):
        assert f.potential >= 15.0
        assert f.contributing_pre.any()
        assert f.contributing_pre.shape == PROTO_SHAPE


def test_global_wta_keeps_first_per_prototype():
    rng = np.random.default_rng(8)
    wave = random_wave(rng, [(20, 20)], 200)
    cands = s2_candidates(wave, protos_from(rng, 2, 8.0))
    kept = global_wta(cands)
    assert sorted(f.prototype for f in kept) == [0, 1]
    assert all(f is next(c for c in cands if c.prototype == f.prototype) for f in kept)


# -- C2 --------------------------------------------------------------------------------

def test_c2_empty_wave_is_zero():
    protos = protos_from(np.random.default_rng(0), 3, 64.0)
    assert np.all(c2_potentials(SpikeWave.empty([(20, 20)]), protos) == 0)


def test_c2_single_weight():
    w = np.zeros(PROTO_SHAPE)
    w[3, 4, 2] = 0.7
    wave = SpikeWave.from_events([(1.0, 0, 2, 3, 4)], [(16, 16)])
    assert c2_potentials(wave, [Prototype(w)])[0] == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_c2_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    shapes = [(19, 18), (17, 16)]
    wave = random_wave(rng, shapes, 120)
    protos = protos_from(rng, 3, 64.0)
    want = c2_brute(events_of(wave), shapes, [p.weights for p in protos])
    assert np.allclose(c2_potentials(wave, protos), want, atol=1e-12)


def test_c2_small_scale_contributes_nothing():
    wave = SpikeWave.from_events([(1.0, 1, 0, 0, 0)], [(16, 16), (10, 10)])
    by_scale = c2_by_scale(wave, [Prototype(np.ones(PROTO_SHAPE))])
    assert by_scale.tolist() == [[0.0], [0.0]]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_c2_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    shapes = [(18, 18)]
    wave = random_wave(rng, shapes, 150)
    keep = rng.random(len(wave)) < 0.5
    sub = SpikeWave(wave.latency[keep], wave.scale[keep], wave.map[keep], wave.row[keep], wave.col[keep], shapes)
    protos = protos_from(rng, 2, 64.0)
    full, part = c2_potentials(wave, protos), c2_potentials(sub, protos)
    assert np.all(full >= part)
    assert np.all(full <= np.array([p.weights.sum() for p in protos]) + 1e-9)


def test_c2_bound_reached_when_all_afferents_spike():
    ev = [(1.0, 0, m, r, c) for m in range(4) for r in range(16) for c in range(16)]
    wave = SpikeWave.from_events(ev, [(16, 16)])
    p = Prototype(np.random.default_rng(1).random(PROTO_SHAPE))
    assert c2_potentials(wave, [p])[0] == pytest.approx(p.weights.sum(), rel=1e-12)


def test_translation_by_one_stride_keeps_scale0_c2():
    rng = np.random.default_rng(3)
    # canvas large enough that every placement touching the patch exists before and after the shift
    img = np.full((260, 260), 0.5)
    img[100:130, 100:130] = rng.integers(0, 256, size=(30, 30)) / 256
    moved = np.full_like(img, 0.5)
    moved[106:136, 106:136] = img[100:130, 100:130]
    cfg = EncoderConfig()
    protos = protos_from(rng, 4, 64.0)
    a = c2_by_scale(c1_pool(encode_image(img, cfg)), protos)[0]
    b = c2_by_scale(c1_pool(encode_image(moved, cfg)), protos)[0]
    assert np.array_equal(a, b)


def test_prototype_shape_validated():
    with pytest.raises(ValueError):
        Prototype(np.zeros((16, 16, 3)))
    assert RF == 16
