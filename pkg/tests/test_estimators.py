import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from properpl.core import LabelSpace, candidate_set_from_members, enumerate_candidate_sets
from properpl.errors import BadWeights, DegenerateDenominator, NotComplementary
from properpl.estimators import (ConfidenceMatrix, RiskEstimate, cc_losses, cl_coefficients,
                                 cl_empirical_risk, confidence_from_posterior, confidences,
                                 mcl_empirical_risk, pcpl_empirical_risk, ppl_empirical_risk)
from properpl.genmodels import cl_model, conditional_probability, pcpl_model, skewed_model
from properpl.nn import cross_entropy_losses, softmax_posterior


def cand(rows, K):
    m = np.zeros((len(rows), K), dtype=bool)
    for i, r in enumerate(rows):
        m[i, [y - 1 for y in r]] = True
    return m


class TestConfidence:
    def test_worked_example(self):
        s = candidate_set_from_members([1, 3], LabelSpace(3))
        r = confidence_from_posterior([0.5, 0.3, 0.2], s)
        assert r == pytest.approx([0.5 / 0.7, 0.0, 0.2 / 0.7], abs=1e-15)

    def test_uniform_posterior(self):
        r = confidences(np.full((1, 5), 0.2), cand([[2, 4, 5]], 5))
        assert r[0] == pytest.approx([0, 1 / 3, 0, 1 / 3, 1 / 3], abs=1e-15)

    def test_singleton(self):
        r = confidences(np.array([[0.1, 0.2, 0.7]]), cand([[2]], 3))
        assert list(r[0]) == [0.0, 1.0, 0.0]

    def test_degenerate(self):
        with pytest.raises(DegenerateDenominator):
            confidences(np.array([[1.0, 0.0, 0.0]]), cand([[2, 3]], 3))

    @settings(max_examples=50)
    @given(st.integers(0, 10_000))
    def test_matrix_invariants(self, seed):
        rng = np.random.default_rng(seed)
        post = softmax_posterior(rng.standard_normal((20, 6)) * 5)
        c = rng.random((20, 6)) < 0.4
        c[np.arange(20), rng.integers(0, 6, 20)] = True
        c[:, 0] &= ~c[:, 1:].all(axis=1)
        ConfidenceMatrix.from_posteriors(post, c).check()

    def test_check_catches_bad_values(self):
        cm = ConfidenceMatrix(np.array([[0.5, 0.5, 0.0]]), cand([[1]], 3))
        with pytest.raises(BadWeights):
            cm.check()


class TestWorkedExamples:
    def test_ppl(self):
        est = ppl_empirical_risk(cand([[1, 2]], 3), np.array([[0.25, 0.75, 0.0]]),
                                 np.array([[2.0, 4.0, 9.9]]))
        assert est.value == 3.5

    def test_ppl_singletons_reduce_to_ordinary_risk(self):
        L = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        c = cand([[3], [1]], 3)
        est = ppl_empirical_risk(c, c.astype(float), L)
        assert est.value == pytest.approx((3.0 + 4.0) / 2)

    def test_cl(self):
        assert cl_empirical_risk(cand([[1, 2]], 3), np.array([[1.0, 2.0, 0.5]])).value == 2.5

    def test_cl_constant_loss(self):
        assert cl_empirical_risk(cand([[1, 3]], 3), np.full((1, 3), 1.7)).value == pytest.approx(1.7)

    def test_cl_requires_complementary(self):
        with pytest.raises(NotComplementary):
            cl_coefficients(cand([[1]], 3))

    def test_mcl(self):
        assert mcl_empirical_risk(cand([[1, 2]], 3), np.array([[1.0, 2.0, 3.0]])).value == 0.0

    def test_mcl_singleton(self):
        est = mcl_empirical_risk(cand([[2]], 4), np.array([[1.0, 2.0, 3.0, 4.0]]))
        assert est.value == 2.0

    @pytest.mark.parametrize("K,m", [(3, 1), (4, 2), (6, 5)])
    def test_pcpl_uniform_posterior(self, K, m):
        c = 1.3
        est = pcpl_empirical_risk(cand([list(range(1, m + 1))], K), np.full((1, K), 1 / K),
                                  np.full((1, K), c))
        assert est.value == pytest.approx(0.5 * (K / m) * c, abs=1e-14)

    def test_pcpl_concentrated_singleton(self):
        post = np.array([[1e-12, 1 - 2e-12, 1e-12]])
        est = pcpl_empirical_risk(cand([[2]], 3), post, np.array([[5.0, 2.0, 7.0]]))
        assert est.value == pytest.approx(1.0, abs=1e-9)

    def test_cc_loss(self):
        scores = np.log(np.array([[0.5, 0.3, 0.2]]))
        assert cc_losses(scores, cand([[1, 3]], 3))[0] == pytest.approx(-math.log(0.7))


class TestAlgebra:
    @settings(max_examples=50)
    @given(st.integers(0, 10_000), st.floats(0.01, 100))
    def test_linearity_and_scaling(self, seed, c):
        rng = np.random.default_rng(seed)
        n, K = 8, 4
        cm = rng.random((n, K)) < 0.5
        cm[np.arange(n), rng.integers(0, K, n)] = True
        cm[:, 0] &= ~cm[:, 1:].all(axis=1)
        post = softmax_posterior(rng.standard_normal((n, K)))
        r = confidences(post, cm)
        L1, L2 = rng.random((n, K)), rng.random((n, K))
        for f in (lambda L: ppl_empirical_risk(cm, r, L).value,
                  lambda L: mcl_empirical_risk(cm, L).value,
                  lambda L: pcpl_empirical_risk(cm, post, L).value):
            assert f(c * L1) == pytest.approx(c * f(L1), rel=1e-12, abs=1e-12)
            assert f(L1 + L2) == pytest.approx(f(L1) + f(L2), rel=1e-12, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        cm = cand([[1], [2, 3], [1, 3], [2]], 3)
        r = confidences(softmax_posterior(rng.standard_normal((4, 3))), cm)
        L = rng.random((4, 3))
        p = np.array([2, 0, 3, 1])
        a = ppl_empirical_risk(cm, r, L).value
        b = ppl_empirical_risk(cm[p], r[p], L[p]).value
        assert a == pytest.approx(b, abs=1e-15)

    def test_std_error_from_contributions(self):
        est = RiskEstimate(2.0, "ppl", 3, np.array([1.0, 2.0, 3.0]))
        assert est.std_error == pytest.approx(1 / math.sqrt(3))
        assert RiskEstimate(1.0, "ppl", 1, np.array([1.0])).std_error is None


def _brute_expectation(estimator, model, joint, losses):
    """Independent enumeration: sum_{x,y,s} p(x,y) p(s|x,y) * per-example estimate."""
    K = joint.shape[1]
    post = joint / joint.sum(axis=1, keepdims=True)
    terms = []
    for i in range(joint.shape[0]):
        for s in enumerate_candidate_sets(LabelSpace(K)):
            row = np.zeros((1, K), dtype=bool)
            row[0, [y - 1 for y in s.members]] = True
            for y in s.members:
                w = joint[i, y - 1] * conditional_probability(model, None, y, s)
                if w == 0:
                    continue
                if estimator == "ppl":
                    v = ppl_empirical_risk(row, confidences(post[i:i + 1], row), losses[i:i + 1])
                elif estimator == "mcl":
                    v = mcl_empirical_risk(row, losses[i:i + 1])
                elif estimator == "cl":
                    v = cl_empirical_risk(row, losses[i:i + 1])
                else:
                    v = pcpl_empirical_risk(row, post[i:i + 1], losses[i:i + 1])
                terms.append(w * v.value)
    return math.fsum(terms)


class TestUnbiasedness:
    @pytest.fixture
    def world(self):
        rng = np.random.default_rng(42)
        joint = rng.dirichlet(np.ones(12)).reshape(3, 4)
        losses = cross_entropy_losses(rng.standard_normal((3, 4)) * 2)
        risk = math.fsum((joint * losses).ravel())
        return joint, losses, risk

    @pytest.mark.parametrize("model", [cl_model(4), pcpl_model(4), skewed_model(0.8, 4)],
                             ids=["cl", "pcpl", "skew0.8"])
    def test_ppl(self, world, model):
        joint, losses, risk = world
        assert abs(_brute_expectation("ppl", model, joint, losses) - risk) < 1e-12

    def test_mcl_under_skew(self, world):
        joint, losses, risk = world
        assert abs(_brute_expectation("mcl", skewed_model(0.8, 4), joint, losses) - risk) < 1e-12

    def test_cl_under_cl(self, world):
        joint, losses, risk = world
        assert abs(_brute_expectation("cl", cl_model(4), joint, losses) - risk) < 1e-12

    def test_literal_uniform_estimator(self, world):
        # unbiased under its own uniform generation, biased once the size law is skewed
        joint, losses, risk = world
        assert abs(_brute_expectation("pcpl", pcpl_model(4), joint, losses) - risk) < 1e-12
        assert abs(_brute_expectation("pcpl", skewed_model(0.8, 4), joint, losses) - risk) > 1e-3
