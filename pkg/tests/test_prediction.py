import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censored_logit import ChoiceSet, FitResult, predict
from censored_logit.exceptions import CompletenessError, DomainError, SchemaError
from censored_logit.likelihood import full_probabilities
from censored_logit.prediction import (
    GENERATOR,
    decide,
    no_purchase_probabilities,
    predict_probabilities,
)

from conftest import (
    NEWDATA1,
    NEWDATA1_DECISIONS,
    NEWDATA1_PROBS,
    NEWDATA2,
    NEWDATA2_PROBS,
    reference_coefficients,
    reference_remaining_sets,
)


def test_newdata1(reference_model):
    res = predict(reference_model, NEWDATA1, 7)
    assert res.codes == (1, 5, 8)
    np.testing.assert_allclose(res.probabilities, NEWDATA1_PROBS, atol=5e-7)
    assert res.decisions.tolist() == NEWDATA1_DECISIONS
    assert res.mode == "fixed" and res.seed is None


def test_newdata2(reference_model):
    res = predict(reference_model, NEWDATA2, 3)
    assert res.codes == (1, 3, 4, 5, 7, 8, 9, 10)
    np.testing.assert_allclose(res.probabilities, NEWDATA2_PROBS, atol=5e-7)
    assert res.probabilities[0, 2] == pytest.approx(0.488744, abs=5e-7)


def test_extra_columns_ignored(reference_model):
    rows = NEWDATA1.assign(Price_2=1.0, note="x")
    np.testing.assert_array_equal(predict_probabilities(reference_model, rows, 7),
                                  predict_probabilities(reference_model, NEWDATA1, 7))


def test_row_invariants(reference_model, rng):
    rows = pd.DataFrame(rng.uniform(50, 800, (200, 8)), columns=NEWDATA2.columns)
    res = predict(reference_model, rows, 3)
    np.testing.assert_allclose(res.probabilities.sum(axis=1), 1.0, atol=1e-10)
    assert set(res.decisions) <= set(res.codes)
    sampled = predict(reference_model, rows, 3, fixed=False, seed=1)
    assert set(sampled.decisions) <= set(res.codes)


def test_unknown_set_code_lists_valid(reference_model):
    with pytest.raises(DomainError, match=r"valid codes: \[1, 2, .*12\]"):
        predict(reference_model, NEWDATA1, 13)


def test_missing_column(reference_model):
    with pytest.raises(SchemaError, match="Price_8"):
        predict(reference_model, NEWDATA1.drop(columns="Price_8"), 7)


def test_missing_value(reference_model):
    rows = NEWDATA1.astype(float)
    rows.loc[2, "Price_5"] = np.nan
    with pytest.raises(CompletenessError, match="row 2"):
        predict(reference_model, rows, 7)


def test_single_alternative_set():
    from conftest import ROOM_TYPES
    from censored_logit import AlternativeCatalog
    sets = reference_remaining_sets() + (ChoiceSet((4,), 13, 0),)
    model = FitResult.from_coefficients(reference_coefficients(),
                                        AlternativeCatalog(ROOM_TYPES), sets, ("Price",))
    res = predict(model, pd.DataFrame({"Price_4": [10.0, 900.0]}), 13, fixed=False, seed=3)
    assert res.probabilities.tolist() == [[1.0], [1.0]]
    assert res.decisions.tolist() == [4, 4]


def test_no_purchase_column_matches_full_model(reference_model):
    res = predict(reference_model, NEWDATA1, 7, with_no_purchase=True)
    for r in range(len(NEWDATA1)):
        p0, _ = full_probabilities(reference_coefficients(), (1, 5, 8),
                                   NEWDATA1.iloc[r].to_numpy(dtype=float))
        assert res.no_purchase[r] == pytest.approx(p0, rel=1e-13)
    assert "No_Purchase" in res.to_frame().columns
    np.testing.assert_array_equal(no_purchase_probabilities(reference_model, NEWDATA1, 7),
                                  res.no_purchase)


# ---------------------------------------------------------------------------
# sampled decisions


def test_sampled_is_reproducible(reference_model):
    a = predict(reference_model, NEWDATA2, 3, fixed=False, seed=42)
    b = predict(reference_model, NEWDATA2, 3, fixed=False, seed=42)
    assert a.decisions.tolist() == b.decisions.tolist()
    assert a.seed == 42 and a.mode == "sampled"


def test_sampled_seed_recorded_when_absent(reference_model):
    res = predict(reference_model, NEWDATA1, 7, fixed=False)
    assert isinstance(res.seed, int)
    again = predict(reference_model, NEWDATA1, 7, fixed=False, seed=res.seed)
    assert again.decisions.tolist() == res.decisions.tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(1, 40))
def test_sampled_prefix_stability(seed, k):
    rng = np.random.default_rng(seed % 1000)
    probs = rng.dirichlet(np.ones(4), size=40)
    codes = (2, 3, 7, 9)
    full, _ = decide(probs, codes, fixed=False, seed=seed)
    head, _ = decide(probs[:k], codes, fixed=False, seed=seed)
    assert head.tolist() == full[:k].tolist()


def test_sampled_frequencies_follow_probabilities():
    p = np.array([0.1, 0.0, 0.6, 0.3])
    probs = np.tile(p, (40_000, 1))
    dec, _ = decide(probs, (1, 2, 3, 4), fixed=False, seed=11)
    freq = np.bincount(dec, minlength=5)[1:] / dec.size
    assert freq[1] == 0.0
    np.testing.assert_allclose(freq, p, atol=0.01)


def test_fixed_ties_go_to_first_code():
    dec, _ = decide([[0.4, 0.4, 0.2]], (3, 5, 6))
    assert dec.tolist() == [3]


def test_decide_shape_mismatch():
    with pytest.raises(DomainError):
        decide([[0.5, 0.5]], (1, 2, 3))


# ---------------------------------------------------------------------------
# output


def test_header_and_csv(reference_model, tmp_path):
    res = predict(reference_model, NEWDATA1, 7, fixed=False, seed=9)
    assert res.header() == f"# set_code=7,mode=sampled,seed=9,generator={GENERATOR}"
    path = tmp_path / "pred.csv"
    res.to_csv(path)
    text = path.read_text()
    assert text.splitlines()[0] == res.header()
    back = pd.read_csv(io.StringIO(text), comment="#")
    assert list(back.columns) == ["Alts_1", "Alts_5", "Alts_8", "Decision"]
    np.testing.assert_allclose(back[["Alts_1", "Alts_5", "Alts_8"]].to_numpy(),
                               res.probabilities, rtol=1e-12)


def test_fixed_header_has_no_seed(reference_model):
    assert "seed=NA" in predict(reference_model, NEWDATA1, 7).header()


def test_prediction_from_saved_model(reference_model, tmp_path):
    path = tmp_path / "model.json"
    reference_model.save(path)
    back = FitResult.load(path)
    np.testing.assert_array_equal(predict(back, NEWDATA2, 3).probabilities,
                                  predict(reference_model, NEWDATA2, 3).probabilities)
