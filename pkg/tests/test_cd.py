import numpy as np
import pytest
from conftest import brute_unnormalized, distinct_documents, doc_from_counts, random_params

from rsmnce.benchmark import time_config
from rsmnce.cd import CdConfig, GibbsState, cd_minibatch_update, gibbs_step, run_chain, train_cd
from rsmnce.corpus import BowDocument
from rsmnce.rsm import ParameterBlowUp, RsmParams
from rsmnce.synthetic import unigram_corpus


def enumerated_distribution(params, D):
    """Model probability of each distinct count vector of length D."""
    vecs, mult = distinct_documents(params.K, D)
    mass = np.array([m * brute_unnormalized(params, v) for v, m in zip(vecs, mult)])
    return vecs, mass / mass.sum()


def state_of(rows):
    return GibbsState.from_docs([doc_from_counts(r) for r in rows], len(rows[0]))


class TestGibbsStep:
    def test_zero_params_uniform(self, backend):
        K, n = 5, 4000
        state = state_of([[4, 0, 0, 0, 0]] * n)
        new = gibbs_step(RsmParams.zeros(K, 3), state, np.random.default_rng(0))
        assert set(np.unique(new.h).tolist()) <= {0.0, 1.0}
        assert abs(new.h.mean() - 0.5) < 0.02
        counts = new.counts.toarray()
        assert np.all(counts.sum(axis=1) == 4)
        np.testing.assert_allclose(counts.sum(axis=0) / (4 * n), 1 / K, atol=0.01)

    def test_saturated_softmax(self):
        p = RsmParams(np.zeros((2, 3)), np.array([30.0, 0.0, 0.0]), np.zeros(2))
        new = gibbs_step(p, state_of([[0, 2, 1]] * 50), np.random.default_rng(1))
        assert np.all(new.counts.toarray() == [3, 0, 0])

    def test_length_preserved(self, rng, backend):
        p = random_params(rng, 20, 4, scale=2.0)
        rows = rng.poisson(1.0, size=(30, 20))
        rows[:, 0] += 1
        state = state_of(rows)
        for _ in range(5):
            state = gibbs_step(p, state, rng)
            np.testing.assert_array_equal(np.asarray(state.counts.sum(axis=1)).ravel(), rows.sum(axis=1))

    def test_rejects_fractional(self):
        with pytest.raises(ValueError):
            GibbsState.from_docs([BowDocument([0], [1.5])], 2)

    def test_chain_marginal(self, backend):
        rng = np.random.default_rng(7)
        p = random_params(rng, 2, 1)
        vecs, target = enumerated_distribution(p, 1)
        chains, burn, keep = 2000, 20, 50
        state = state_of([[1, 0]] * chains)
        state = run_chain(p, state, burn, rng)
        hits = np.zeros(2)
        for _ in range(keep):
            state = gibbs_step(p, state, rng)
            hits += np.asarray(state.counts.sum(axis=0)).ravel()
        # a length-1 document is a unit vector, so index by its word
        word_prob = np.zeros(2)
        word_prob[vecs.argmax(axis=1)] = target
        assert 0.5 * np.abs(hits / hits.sum() - word_prob).sum() < 0.01


class TestUpdate:
    cfg = CdConfig(gibbs_steps=1, learning_rate=0.1, hidden=2)

    def batch(self, rng, n=6, K=5):
        rows = rng.poisson(1.0, size=(n, K))
        rows[:, 0] += 1
        return [doc_from_counts(r) for r in rows]

    def test_lr_zero_identity(self, rng):
        p = random_params(rng, 5, 2)
        cfg = CdConfig(learning_rate=0.0, hidden=2)
        new, stats, _ = cd_minibatch_update(p, self.batch(rng), cfg, np.random.default_rng(0))
        assert new == p
        assert stats["seconds"] > 0

    def test_fixed_point(self):
        p = RsmParams(np.zeros((2, 3)), np.array([40.0, -40.0, -40.0]), np.zeros(2))
        batch = [BowDocument([0], [3.0]), BowDocument([0], [5.0])]
        new, _, _ = cd_minibatch_update(p, batch, self.cfg, np.random.default_rng(0))
        np.testing.assert_allclose(new.W, p.W, atol=1e-15)
        np.testing.assert_allclose(new.b, p.b, atol=1e-15)
        np.testing.assert_allclose(new.a, p.a, atol=1e-15)

    def test_b_direction(self, rng):
        p = random_params(rng, 5, 2)
        batch = self.batch(rng)
        new, stats, _ = cd_minibatch_update(p, batch, self.cfg, np.random.default_rng(3))
        data = GibbsState.from_docs(batch, 5)
        sample = run_chain(p, data, 1, np.random.default_rng(3))
        want = 0.1 * (data.counts.toarray().mean(axis=0) - sample.counts.toarray().mean(axis=0))
        np.testing.assert_allclose(new.b - p.b, want, atol=1e-14)
        assert stats["free_energy"] == pytest.approx(np.mean([
            -p.b[d.ids] @ d.values - np.logaddexp(0, p.W[:, d.ids] @ d.values + d.length * p.a).sum()
            for d in batch
        ]))

    def test_persistent_chains_survive(self, rng):
        p = random_params(rng, 5, 2)
        cfg = CdConfig(persistent=True, learning_rate=0.1, hidden=2)
        first, second = self.batch(rng), self.batch(rng)
        p1, _, chains1 = cd_minibatch_update(p, first, cfg, np.random.default_rng(1))
        np.testing.assert_array_equal(chains1.counts.sum(axis=1), GibbsState.from_docs(first, 5).counts.sum(axis=1))
        _, _, chains2 = cd_minibatch_update(p1, second, cfg, np.random.default_rng(2), chains=chains1)
        expected = run_chain(p1, chains1, 1, np.random.default_rng(2))
        np.testing.assert_array_equal(chains2.counts.toarray(), expected.counts.toarray())
        # never reset by the second batch, whose lengths differ
        np.testing.assert_array_equal(chains2.lengths, chains1.lengths)

    def test_empty_batch(self, rng):
        with pytest.raises(ValueError):
            cd_minibatch_update(random_params(rng, 3, 2), [], self.cfg, rng)

    def test_blow_up(self):
        p = RsmParams(np.full((2, 3), 1e308), np.zeros(3), np.zeros(2))
        with pytest.raises(ParameterBlowUp), np.errstate(all="ignore"):
            cd_minibatch_update(p, [BowDocument([0], [2.0])], self.cfg, np.random.default_rng(0))


class TestTraining:
    def test_learns_enumerable_model(self):
        rng = np.random.default_rng(11)
        K, H, D = 3, 2, 2
        truth = random_params(rng, K, H, scale=1.5)
        vecs, target = enumerated_distribution(truth, D)
        picks = rng.choice(len(vecs), size=400, p=target)
        data = vecs[picks]
        empirical = np.bincount(picks, minlength=len(vecs)) / picks.size
        p = RsmParams(rng.normal(0, 0.01, (H, K)), np.zeros(K), np.zeros(H))
        before = 0.5 * np.abs(enumerated_distribution(p, D)[1] - empirical).sum()
        cfg = CdConfig(gibbs_steps=1, learning_rate=0.05, hidden=H)
        for step in range(2000):
            idx = rng.integers(0, data.shape[0], size=20)
            p, _, _ = cd_minibatch_update(p, [doc_from_counts(v) for v in data[idx]], cfg, rng)
        after = 0.5 * np.abs(enumerated_distribution(p, D)[1] - empirical).sum()
        assert after < before

    def test_epochs_zero(self):
        c = unigram_corpus(10, 8, 5, rng=0)
        p, stats = train_cd(c, CdConfig(epochs=0, hidden=3))
        assert stats == []
        assert p.is_finite()

    def test_seed_determinism(self):
        c = unigram_corpus(20, 30, 8, rng=0)
        cfg = CdConfig(epochs=2, hidden=4, batch_size=8, seed=5)
        p1, s1 = train_cd(c, cfg)
        p2, s2 = train_cd(c, cfg)
        assert p1 == p2
        assert [r["objective"] for r in s1] == [r["objective"] for r in s2]

    def test_idf_rejected(self):
        c = unigram_corpus(10, 8, 5, rng=0)
        with pytest.raises(ValueError):
            train_cd(c.with_idf(), CdConfig(hidden=2))

    def test_empty_corpus(self):
        c = unigram_corpus(10, 8, 5, rng=0).subset([])
        with pytest.raises(ValueError):
            train_cd(c, CdConfig(hidden=2))

    def test_more_gibbs_steps_cost_more(self):
        t1 = time_config("cd1", 2000, hidden=32, batch_size=32, batches=5, warmup=1, doc_length=50)
        t5 = time_config("cd5", 2000, hidden=32, batch_size=32, batches=5, warmup=1, doc_length=50)
        assert t5.mean_seconds > t1.mean_seconds
