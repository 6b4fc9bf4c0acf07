import numpy as np
import pytest

from properpl.core import Dataset, LabelSpace
from properpl.data import corrupt, gaussian_scenario, make_synthetic
from properpl.errors import MissingLabels, NonFiniteLoss, NotComplementary, UsageError
from properpl.genmodels import cl_model, skewed_model
from properpl.nn import softmax_posterior
from properpl.trainer import (FixedFamily, SyntheticFamily, TrainConfig, derive_seed,
                              evaluate_accuracy, sweep, train, train_supervised)


@pytest.fixture(scope="module")
def synthetic():
    sc = gaussian_scenario(3, 5, 2.0)
    tr, _ = make_synthetic(sc, 1500, seed=1)
    te, _ = make_synthetic(sc, 1000, seed=2)
    return tr, te


def quick(**kw):
    base = dict(epochs=10, batch_size=64, learning_rate=1e-2, weight_decay=1e-4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestConfig:
    def test_validation(self):
        with pytest.raises(UsageError):
            TrainConfig(estimator="bogus")
        with pytest.raises(UsageError):
            TrainConfig(epochs=0)

    def test_derive_seed_stable(self):
        assert derive_seed(3, "init") == derive_seed(3, "init")
        assert derive_seed(3, "init") != derive_seed(3, "shuffle")


class TestPosteriorState:
    def test_initial_uniform_and_batch_local_updates(self, synthetic):
        tr, _ = synthetic
        ds = corrupt(tr, skewed_model(0.8, 3), seed=0)
        seen = []

        def on_batch(epoch, b, idx, post):
            if epoch == 1 and b == 0:
                rest = np.setdiff1d(np.arange(ds.n), idx)
                seen.append((np.array(post[rest]), np.array(post[idx]), idx.copy()))

        model, _ = train(ds, quick(epochs=1, batch_size=100), on_batch=on_batch)
        rest, batch, idx = seen[0]
        assert np.all(rest == 1.0 / 3)
        assert not np.allclose(batch, 1.0 / 3)
        assert np.allclose(batch.sum(axis=1), 1.0, atol=1e-14)

    def test_batch_rows_are_softmax_of_updated_model(self, synthetic):
        tr, _ = synthetic
        ds = corrupt(tr, skewed_model(0.8, 3), seed=0)
        out = {}

        def on_batch(epoch, b, idx, post):
            out["last"] = (idx.copy(), np.array(post[idx]))

        model, _ = train(ds, quick(epochs=1, batch_size=128), on_batch=on_batch)
        idx, post = out["last"]
        assert np.allclose(post, softmax_posterior(model.forward(ds.features[idx])), atol=1e-15)

    def test_last_partial_batch_included(self, synthetic):
        tr, _ = synthetic
        sizes = []
        train(tr.subset(np.arange(130)), quick(epochs=1, batch_size=64),
              on_batch=lambda e, b, idx, p: sizes.append(len(idx)))
        assert sizes == [64, 64, 2]

    def test_debug_checks_confidences(self, synthetic):
        tr, _ = synthetic
        train(corrupt(tr, skewed_model(0.8, 3), 1), quick(epochs=2, debug=True))


class TestLearning:
    def test_separable_data(self):
        sc = gaussian_scenario(3, 5, 6.0)
        tr, _ = make_synthetic(sc, 1500, seed=3)
        te, _ = make_synthetic(sc, 1000, seed=4)
        _, rep = train(corrupt(tr, skewed_model(0.8, 3), 0), quick(), test=te)
        assert rep.final.test_acc >= 0.99

    @pytest.mark.parametrize("estimator", ["ppl", "cc", "mcl"])
    def test_estimators_beat_chance(self, synthetic, estimator):
        tr, te = synthetic
        _, rep = train(corrupt(tr, skewed_model(0.8, 3), 0), quick(estimator=estimator), test=te)
        assert rep.final.test_acc > 0.75
        assert len(rep.epochs) == 10

    def test_cl_estimator_on_complementary_data(self, synthetic):
        tr, te = synthetic
        _, rep = train(corrupt(tr, cl_model(3), 0), quick(estimator="cl", epochs=20), test=te)
        assert rep.final.test_acc > 0.6

    def test_cl_estimator_rejects_other_sets(self, synthetic):
        tr, _ = synthetic
        with pytest.raises(NotComplementary):
            train(corrupt(tr, skewed_model(0.8, 3), 0), quick(estimator="cl"))

    def test_mlp_runs(self, synthetic):
        tr, te = synthetic
        _, rep = train(corrupt(tr, skewed_model(0.8, 3), 0),
                       quick(model="mlp", hidden=(16, 16), epochs=3), test=te)
        assert rep.final.test_acc > 0.5

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_reported(self):
        x = np.zeros((10, 2))
        x[3, 0] = np.inf
        ds = Dataset.fully_labeled(x, np.ones(10, dtype=int), LabelSpace(3))
        with pytest.raises(NonFiniteLoss, match="epoch 1, batch 0"):
            train(ds, quick())

    def test_accuracy_needs_labels(self, synthetic):
        tr, _ = synthetic
        model, _ = train(tr, quick(epochs=1))
        with pytest.raises(MissingLabels):
            evaluate_accuracy(model, tr.strip_labels())


class TestReproducibility:
    def test_singleton_data_matches_supervised_bitwise(self, synthetic):
        tr, te = synthetic
        m1, r1 = train(tr, quick(exact=True), test=te)
        m2, r2 = train_supervised(tr, quick(exact=True), test=te)
        assert all(np.array_equal(a, b) for a, b in zip(m1.parameters(), m2.parameters()))
        assert [e.train_risk for e in r1.epochs] == [e.train_risk for e in r2.epochs]

    def test_same_seed_same_model(self, synthetic):
        tr, _ = synthetic
        ds = corrupt(tr, skewed_model(0.8, 3), 0)
        m1, r1 = train(ds, quick(exact=True))
        m2, r2 = train(ds, quick(exact=True))
        assert all(np.array_equal(a, b) for a, b in zip(m1.parameters(), m2.parameters()))
        assert r1.to_dict(include_time=False) == r2.to_dict(include_time=False)


class TestSweep:
    def test_single_trial_has_no_std_err(self, synthetic):
        tr, te = synthetic
        rep = sweep(FixedFamily(tr, te), [0.8], 1, quick(epochs=2), master_seed=0)
        row = rep.row(0.8, "ppl")
        assert row["std_err"] is None and row["trials_ok"] == 1

    def test_failed_runs_are_recorded(self, synthetic):
        tr, te = synthetic
        with pytest.warns(UserWarning):
            rep = sweep(FixedFamily(tr, te), [0.8], 2, quick(epochs=1), estimators=("cl",))
        assert rep.row(0.8, "cl")["trials_ok"] == 0
        assert all("NotComplementary" in r.error for r in rep.runs)

    def test_deterministic(self):
        fam = SyntheticFamily(gaussian_scenario(), 300, 200)
        a = sweep(fam, [0.9, 0.7], 2, quick(epochs=2, exact=True), master_seed=5)
        b = sweep(fam, [0.9, 0.7], 2, quick(epochs=2, exact=True), master_seed=5)
        assert a.rows == b.rows


@pytest.mark.slow
def test_gap_to_supervised_shrinks_with_n():
    # risk consistency: the PPL learner approaches the supervised one as n grows
    K = 5
    sc = gaussian_scenario(K, K, 2.0)
    medians = []
    for n in (500, 2000, 8000):
        gaps = []
        for seed in range(5):
            tr, _ = make_synthetic(sc, n, 1000 + seed)
            te, _ = make_synthetic(sc, 4000, 5000 + seed)
            cfg = TrainConfig(epochs=50, seed=seed)
            _, a = train(corrupt(tr, skewed_model(0.3, K), seed), cfg, test=te)
            _, b = train_supervised(tr, cfg, test=te)
            gaps.append(abs(a.final.test_acc - b.final.test_acc))
        medians.append(float(np.median(gaps)))
    assert medians[0] > medians[1] > medians[2]
    assert medians[2] < 0.01
