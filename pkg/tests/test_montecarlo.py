"""Generator tests: bit-exact reproducibility, stream partitioning, and
agreement of the sampled distributions with quadrature of the model laws."""

import math

import numpy as np
import pytest
from scipy import integrate

from bmixlhv.model import Flavour, ModelParams
from bmixlhv.montecarlo import (
    EventBatch,
    EventFileError,
    RejectionOverflowError,
    SimConfig,
    concatenate_batches,
    config_fingerprint,
    generate,
    generate_events,
    read_events,
    sample_lambda,
    sample_side1,
    sample_side2,
    write_events,
)
from bmixlhv.streams import EventStream
from oracles import (
    inverse_n_exact,
    side2_bin_probability,
    side2_particle_probability,
)

TWO_PI = 2.0 * math.pi


def _config(n=1000, seed=77, symmetrized=False, tau=1.0, dm=0.776):
    return SimConfig(
        params=ModelParams(tau=tau, delta_m=dm),
        n_events=n,
        seed=seed,
        symmetrized=symmetrized,
    )


# ---------------------------------------------------------------------------
# determinism and stream partitioning

def test_generation_is_deterministic():
    cfg = _config(n=500)
    assert generate(cfg) == generate(cfg)


def test_contiguous_ranges_partition_the_stream():
    cfg = _config(n=400)
    whole = generate_events(cfg, 0, 400)
    parts = [generate_events(cfg, 0, 137), generate_events(cfg, 137, 400)]
    assert concatenate_batches(parts) == whole


def test_worker_count_does_not_change_the_batch():
    cfg = _config(n=997)  # prime, so the split bounds are ragged
    ref = generate(cfg, workers=1)
    for workers in (2, 3, 8):
        assert generate(cfg, workers=workers) == ref


def test_scalar_samplers_reproduce_the_batch_columns():
    cfg = _config(n=5, seed=2024)
    batch = generate(cfg)
    for i in range(5):
        stream = EventStream(seed=cfg.seed, event_index=i)
        lam = sample_lambda(stream, cfg.params)
        t1, f1 = sample_side1(stream, lam, cfg.params)
        t2, f2 = sample_side2(stream, lam, cfg.params)
        assert lam == batch.lam[i]
        assert t1 == batch.t1[i] and int(f1) == batch.flavour1[i]
        assert t2 == batch.t2[i] and int(f2) == batch.flavour2[i]


def test_generate_rejects_bad_worker_count():
    with pytest.raises(ValueError):
        generate(_config(n=10), workers=0)


# ---------------------------------------------------------------------------
# sampled distributions vs quadrature

def test_column_invariants(big_batch):
    assert np.all((big_batch.lam >= 0.0) & (big_batch.lam < TWO_PI))
    assert np.all(big_batch.t1 >= 0.0) and np.all(big_batch.t2 >= 0.0)
    assert set(np.unique(big_batch.flavour1)) == {1, 2}
    assert set(np.unique(big_batch.flavour2)) == {1, 2}
    assert not big_batch.swapped.any()
    assert np.array_equal(big_batch.index, np.arange(len(big_batch)))


def test_acceptance_rates_match_envelope_geometry(big_batch):
    """Both rejection stages accept at rate 2/pi: the phase stage by the
    envelope area, the time stage because the mean number of proposals is
    tau/N-bar with the harmonic mean fixed by the phase density."""
    stats = big_batch.rng_stats
    assert stats is not None
    assert abs(stats.lambda_acceptance_rate - 2.0 / math.pi) < 0.002
    assert abs(stats.t2_acceptance_rate - 2.0 / math.pi) < 0.002
    assert stats.lambda_proposals > len(big_batch)
    assert stats.t2_proposals > len(big_batch)


def test_phase_histogram_matches_density(big_batch, params):
    edges = np.linspace(0.0, TWO_PI, 33)
    counts, _ = np.histogram(big_batch.lam, bins=edges)
    n = len(big_batch)
    chi2 = 0.0
    for j in range(32):
        p, err = integrate.quad(
            lambda l: inverse_n_exact(l, params.delta_m) / 4.0,
            edges[j],
            edges[j + 1],
            epsabs=1e-12,
            epsrel=1e-10,
        )
        expected = n * p
        chi2 += (counts[j] - expected) ** 2 / expected
    assert chi2 / 31.0 < 1.8


def test_first_side_time_is_exponential(big_batch):
    n = len(big_batch)
    assert abs(big_batch.t1.mean() - 1.0) < 4.0 / math.sqrt(n)
    # time-integrated first-side flavour is an even split
    p_b0 = np.mean(big_batch.flavour1 == int(Flavour.B0))
    assert abs(p_b0 - 0.5) < 4.0 * 0.5 / math.sqrt(n)


def test_second_side_time_density_at_fixed_phase(params):
    """Hold the hidden phase at lam=1 and check the thinned-cosine time law
    against bin probabilities computed from exact antiderivatives."""
    lam = 1.0
    n = 20_000
    stream = EventStream(seed=555, event_index=0)
    times = np.empty(n)
    pick_b0 = 0
    for i in range(n):
        t, fl = sample_side2(stream, lam, params)
        times[i] = t
        pick_b0 += fl is Flavour.B0

    edges = np.linspace(0.0, 4.0, 17)
    counts, _ = np.histogram(times, bins=edges)
    probs = [
        side2_bin_probability(lam, float(lo), float(hi), params.delta_m)
        for lo, hi in zip(edges[:-1], edges[1:])
    ]
    tail = 1.0 - sum(probs)
    counts = np.append(counts, n - counts.sum())
    probs.append(tail)
    expected = n * np.asarray(probs)
    assert expected.min() > 10.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 / 16.0 < 1.8

    p_b0 = side2_particle_probability(lam, params.delta_m)
    se = math.sqrt(p_b0 * (1.0 - p_b0) / n)
    assert abs(pick_b0 / n - p_b0) < 4.0 * se


def test_second_side_flavour_tracks_cosine_sign(big_batch, params):
    # reconstruct the sign of cos(lam - dm t2) and compare with the tag
    c = np.cos(big_batch.lam - params.delta_m * big_batch.t2)
    want = np.where(c > 0.0, int(Flavour.B0), int(Flavour.B0BAR))
    assert np.array_equal(big_batch.flavour2, want)


def test_first_side_flavour_is_the_window(big_batch, params):
    from bmixlhv.model import flavour_window_codes

    codes = flavour_window_codes(big_batch.lam, big_batch.t1, params)
    assert np.array_equal(big_batch.flavour1, codes)


# ---------------------------------------------------------------------------
# symmetrized mode

def test_symmetrized_swaps_are_bookkept():
    std = generate(_config(n=100_000, seed=3141))
    sym = generate(_config(n=100_000, seed=3141, symmetrized=True))
    frac = sym.swapped.mean()
    assert abs(frac - 0.5) < 4.0 * 0.5 / math.sqrt(len(sym))
    keep = ~sym.swapped
    assert np.array_equal(sym.lam, std.lam)  # the coin is drawn after the phase
    assert np.array_equal(sym.t1[keep], std.t1[keep])
    assert np.array_equal(sym.flavour2[keep], std.flavour2[keep])
    sw = sym.swapped
    assert np.array_equal(sym.t1[sw], std.t2[sw])
    assert np.array_equal(sym.t2[sw], std.t1[sw])
    assert np.array_equal(sym.flavour1[sw], std.flavour2[sw])
    assert np.array_equal(sym.flavour2[sw], std.flavour1[sw])


def test_symmetrizing_preserves_lag_histograms():
    """Swapping sides changes neither |t1-t2| nor the same/opposite class, so
    a same-seed symmetrized run has the identical lag histogram — which is
    why two-sample comparisons must use independent seeds."""
    from bmixlhv.analysis import bin_events

    std = generate(_config(n=50_000, seed=99))
    sym = generate(_config(n=50_000, seed=99, symmetrized=True))
    edges = np.linspace(0.0, 5.0, 26)
    a = bin_events(std, edges)
    b = bin_events(sym, edges)
    assert np.array_equal(a.counts_same, b.counts_same)
    assert np.array_equal(a.counts_opposite, b.counts_opposite)


# ---------------------------------------------------------------------------
# event file round trip

def test_event_file_round_trip(tmp_path):
    cfg = _config(n=300, seed=5, symmetrized=True)
    batch = generate(cfg)
    path = tmp_path / "events.csv"
    write_events(batch, cfg, path)
    loaded, loaded_cfg = read_events(path)
    assert loaded == batch
    assert loaded_cfg == cfg
    # a rewrite of what was read is byte-identical
    path2 = tmp_path / "again.csv"
    write_events(loaded, loaded_cfg, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_event_file_rejects_fingerprint_tampering(tmp_path):
    cfg = _config(n=5)
    batch = generate(cfg)
    path = tmp_path / "events.csv"
    write_events(batch, cfg, path)
    lines = path.read_text().splitlines()
    lines[3] = "# seed=12345"  # change a header field out from under the digest
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(EventFileError):
        read_events(tmp_path / "bad.csv")


def test_event_file_rejects_malformed_rows(tmp_path):
    cfg = _config(n=3)
    batch = generate(cfg)
    good = tmp_path / "events.csv"
    write_events(batch, cfg, good)
    text = good.read_text()

    short = text.rstrip("\n").rsplit(",", 1)[0] + "\n"  # drop last field
    (tmp_path / "short.csv").write_text(short)
    with pytest.raises(EventFileError):
        read_events(tmp_path / "short.csv")

    broken = text.replace("B0bar", "B9", 1)
    (tmp_path / "label.csv").write_text(broken)
    with pytest.raises(EventFileError):
        read_events(tmp_path / "label.csv")

    headerless = "\n".join(
        line for line in text.splitlines() if not line.startswith("# seed=")
    )
    (tmp_path / "hdr.csv").write_text(headerless + "\n")
    with pytest.raises(EventFileError):
        read_events(tmp_path / "hdr.csv")


def test_write_events_requires_matching_config(tmp_path):
    cfg = _config(n=4, seed=8)
    batch = generate(cfg)
    with pytest.raises(ValueError):
        write_events(batch, _config(n=4, seed=9), tmp_path / "x.csv")


# ---------------------------------------------------------------------------
# config and batch plumbing

def test_config_fingerprint_separates_configs():
    base = _config(n=10, seed=1)
    assert config_fingerprint(base) == config_fingerprint(_config(n=10, seed=1))
    variants = [
        _config(n=11, seed=1),
        _config(n=10, seed=2),
        _config(n=10, seed=1, symmetrized=True),
        _config(n=10, seed=1, dm=0.775),
        _config(n=10, seed=1, tau=2.0),
    ]
    digests = {config_fingerprint(c) for c in variants}
    assert config_fingerprint(base) not in digests
    assert len(digests) == len(variants)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_events": 0},
        {"n_events": -5},
        {"seed": -1},
        {"seed": 2**64},
        {"max_rejection_iters": 0},
    ],
)
def test_sim_config_validation(kwargs):
    base = dict(params=ModelParams(1.0, 0.776), n_events=10, seed=1)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimConfig(**base)


def test_rejection_overflow_raises():
    cfg = SimConfig(
        params=ModelParams(1.0, 0.776),
        n_events=64,
        seed=0,
        max_rejection_iters=1,
    )
    with pytest.raises(RejectionOverflowError):
        generate(cfg)


def test_batch_indexing_and_iteration():
    cfg = _config(n=7)
    batch = generate(cfg)
    ev = batch[3]
    assert ev.index == 3
    assert ev.lam == batch.lam[3] and ev.t2 == batch.t2[3]
    assert isinstance(ev.flavour1, Flavour)
    assert len(list(batch)) == 7
    assert batch != generate(_config(n=7, seed=78))
    assert (batch == object()) is False


def test_concatenate_batches_validation():
    with pytest.raises(ValueError):
        concatenate_batches([])
    a = generate(_config(n=5, seed=1))
    b = generate(_config(n=5, seed=2))
    with pytest.raises(ValueError):
        concatenate_batches([a, b])
