import numpy as np
import pytest
from hypothesis import given, strategies as st

from synergraph.errors import LengthMismatch
from synergraph.metrics import auprc_score, auroc_score, evaluate

from oracles import auroc_pairwise


class TestAuroc:
    def test_perfect_ranking(self):
        assert auroc_score([0.9, 0.1], [1, 0]) == 1.0

    def test_all_equal_scores_is_half(self):
        assert auroc_score([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0]) == 0.5

    def test_fixture_three_quarters(self):
        # 3 of 4 positive/negative pairs concordant
        assert auroc_score([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75

    def test_matches_pairwise_oracle_on_random_instances(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(2, 60))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            # mix continuous scores with heavy ties
            if rng.random() < 0.5:
                scores = rng.choice([0.1, 0.5, 0.9], size=n)
            else:
                scores = rng.random(n)
            assert abs(auroc_score(scores, labels) - auroc_pairwise(scores, labels)) < 1e-9

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            auroc_score([0.1, 0.2], [1])


class TestAuprc:
    def test_perfect_ranking_is_one(self):
        assert auprc_score([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_matches_step_integration_by_hand(self):
        # scores desc: 0.8(+), 0.6(-), 0.4(+), 0.2(-)
        # steps: r=.5 p=1 -> +.5 ; r=.5 p=1/2 -> +0 ; r=1 p=2/3 -> +1/3 ; r=1 -> +0
        got = auprc_score([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
        assert abs(got - (0.5 + 1.0 / 3.0)) < 1e-12

    def test_tied_scores_grouped(self):
        # one threshold group: recall 1, precision 1/2
        assert auprc_score([0.5, 0.5], [1, 0]) == 0.5


class TestEvaluate:
    def test_full_report_fixture(self):
        r = evaluate([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
        assert r.au_roc == 0.75
        assert r.n == 4
        assert r.threshold == 0.5
        # predictions at 0.5: [1, 0, 1, 0] -> tp=1 fp=1 tn=1 fn=1
        assert r.acc == 0.5
        assert r.bacc == 0.5

    def test_all_positive_predictions_bacc_half(self):
        r = evaluate([0.9, 0.9, 0.9, 0.9], [1, 1, 0, 0])
        assert r.bacc == 0.5

    def test_single_class_flags_ranking_undefined(self):
        r = evaluate([0.9, 0.8], [1, 1])
        assert r.single_class
        assert r.au_roc is None
        assert r.au_prc is None
        assert r.acc == 1.0

    def test_macro_averages(self):
        # preds at 0.5: [1, 1, 0, 0]; labels [1, 0, 1, 0]
        r = evaluate([0.9, 0.8, 0.1, 0.2], [1, 0, 1, 0])
        # per class: precision_pos = 1/2, precision_neg = 1/2
        assert r.macro_precision == 0.5
        # f1_pos = 0.5, f1_neg = 0.5
        assert r.macro_f1 == 0.5

    def test_empty_rejected(self):
        with pytest.raises(LengthMismatch):
            evaluate([], [])

    @given(
        st.lists(
            st.tuples(st.floats(0, 1, allow_nan=False), st.integers(0, 1)),
            min_size=2,
            max_size=40,
        )
    )
    def test_auroc_always_matches_oracle(self, pairs):
        scores = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
        if len(set(labels)) < 2:
            return
        assert abs(auroc_score(scores, labels) - auroc_pairwise(scores, labels)) < 1e-9

    def test_report_roundtrips_to_dict(self):
        d = evaluate([0.8, 0.2], [1, 0]).to_dict()
        assert d["au_roc"] == 1.0
        assert set(d) == {
            "au_roc", "au_prc", "acc", "bacc", "macro_precision",
            "macro_f1", "n", "threshold", "single_class",
        }
