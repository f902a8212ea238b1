import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import spearmanr

from rnnpipe.anomaly import (
    BACKGROUND,
    SIGNAL,
    ChirpConfig,
    EventWindow,
    ScoredEvent,
    dataset_csv,
    empirical_fpr,
    gen_dataset,
    read_dataset_csv,
    roc_auc,
    roc_csv,
    score,
    stack_windows,
    threshold_from_fpr,
)
from rnnpipe.lstm import ModelSpec, LstmWeights, small_autoencoder
from rnnpipe.train import train_autoencoder


class TestDataset:
    def test_empty(self):
        assert gen_dataset(0, 0, 1) == []

    def test_deterministic(self):
        a = dataset_csv(gen_dataset(20, 20, 5))
        assert a == dataset_csv(gen_dataset(20, 20, 5))
        assert a != dataset_csv(gen_dataset(20, 20, 6))

    def test_layout_and_normalisation(self):
        ev = gen_dataset(3, 2, 0)
        assert [e.label for e in ev] == [BACKGROUND] * 3 + [SIGNAL] * 2
        for e in ev:
            assert e.samples.shape == (8,)
            assert abs(e.samples.mean()) < 1e-12 and abs(e.samples.std() - 1) < 1e-12

    def test_chirp_band_energy(self):
        cfg = ChirpConfig(TS=32, snr=1e6)
        ev = gen_dataset(300, 300, 2, cfg)
        freqs = np.fft.rfftfreq(cfg.TS)
        band = (freqs >= 0.25) & (freqs <= 0.45)

        def frac(es):
            p = np.abs(np.fft.rfft([e.samples for e in es], axis=1)) ** 2
            return np.mean(p[:, band].sum(1) / p.sum(1))

        assert frac(ev[300:]) > frac(ev[:300])

    def test_csv_roundtrip(self):
        ev = gen_dataset(4, 3, 9)
        back = read_dataset_csv(dataset_csv(ev))
        assert [e.label for e in back] == [e.label for e in ev]
        assert all(np.array_equal(a.samples, b.samples) for a, b in zip(ev, back))

    def test_csv_errors(self):
        with pytest.raises(ValueError):
            read_dataset_csv("a,b\n")
        with pytest.raises(ValueError, match="line 2"):
            read_dataset_csv("window,label,s0\n0,weird,1.0\n")

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            gen_dataset(-1, 0, 0)


@pytest.fixture(scope="module")
def trained():
    train = gen_dataset(400, 0, 1)
    return train_autoencoder(stack_windows(train, 8), small_autoencoder(), epochs=5).model


class TestScore:
    def test_perfect_reconstruction(self):
        m = small_autoencoder()
        m = m.with_weights([LstmWeights.zeros(s) for s in m.layers], np.zeros((1, 9)), np.zeros(1))
        ev = [EventWindow(np.zeros(8), BACKGROUND)] * 3
        assert [s.loss for s in score(ev, m)] == [0.0] * 3
        unit = gen_dataset(10, 10, 3)
        for numerics in ("float", "fixed"):
            assert all(abs(s.loss - 1.0) < 1e-9 for s in score(unit, m, numerics))

    def test_fixed_rank_correlation(self, trained):
        ev = gen_dataset(100, 100, 4)
        a = [s.loss for s in score(ev, trained)]
        b = [s.loss for s in score(ev, trained, "fixed")]
        assert spearmanr(a, b)[0] >= 0.99

    def test_jobs_and_chunks(self, trained):
        ev = gen_dataset(50, 50, 4)
        a = score(ev, trained, "fixed")
        b = score(ev, trained, "fixed", jobs=3, chunk=7)
        assert a == b

    def test_wrong_window(self, trained):
        with pytest.raises(ValueError):
            score([EventWindow(np.zeros(5), BACKGROUND)], trained)


class TestThreshold:
    def test_examples(self):
        assert threshold_from_fpr([1, 2, 3, 4], 0.25) == 3
        assert threshold_from_fpr([4, 3, 2, 1], 0.5) == 2
        assert threshold_from_fpr([5, 5, 5], 0.3) == 5
        assert threshold_from_fpr([5, 5, 5], 0.99) == 5
        assert threshold_from_fpr([1, 2, 3], 1.0) < 1

    def test_errors(self):
        for bad in (0, -0.1, 1.5):
            with pytest.raises(ValueError):
                threshold_from_fpr([1.0], bad)
        with pytest.raises(ValueError):
            threshold_from_fpr([], 0.1)

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=60), st.floats(0.01, 0.99))
    def test_brute_force(self, losses, fpr):
        thr = threshold_from_fpr(losses, fpr)
        ok = [v for v in sorted(set(losses)) if sum(x > v for x in losses) <= fpr * len(losses)]
        assert thr == ok[0]
        assert empirical_fpr(losses, thr) <= fpr


def brute_auc(pos, neg):
    return np.mean([1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg])


class TestRoc:
    def test_example(self):
        ev = [ScoredEvent(3, SIGNAL), ScoredEvent(4, SIGNAL), ScoredEvent(1, BACKGROUND), ScoredEvent(3.5, BACKGROUND)]
        assert roc_auc(ev)[0] == pytest.approx(0.75)

    def test_separated(self):
        ev = [ScoredEvent(float(i), BACKGROUND) for i in range(10)] + [ScoredEvent(float(i), SIGNAL) for i in range(10, 15)]
        auc, curve = roc_auc(ev)
        assert auc == 1.0
        assert curve[-1][1] == curve[-1][2] == 1.0

    def test_independent_labels(self):
        rng = np.random.default_rng(0)
        ev = [ScoredEvent(float(x), SIGNAL if rng.random() < 0.5 else BACKGROUND) for x in rng.normal(size=4000)]
        assert abs(roc_auc(ev)[0] - 0.5) < 0.05

    @given(st.lists(st.integers(0, 6), min_size=1, max_size=25), st.lists(st.integers(0, 6), min_size=1, max_size=25))
    def test_matches_pairwise(self, pos, neg):
        ev = [ScoredEvent(float(p), SIGNAL) for p in pos] + [ScoredEvent(float(n), BACKGROUND) for n in neg]
        auc, curve = roc_auc(ev)
        assert auc == pytest.approx(brute_auc(pos, neg))
        assert np.all(np.diff(curve[:, 1]) >= 0) and np.all(np.diff(curve[:, 2]) >= 0)

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc_auc([ScoredEvent(1.0, SIGNAL)])

    def test_csv(self):
        _, curve = roc_auc([ScoredEvent(1.0, SIGNAL), ScoredEvent(0.0, BACKGROUND)])
        lines = roc_csv(curve).splitlines()
        assert lines[0] == "threshold,fpr,tpr" and lines[-1] == "-inf,1.0,1.0"
