import pytest

from gradleak.metrics import length_error, set_score, wer


def test_set_score_examples():
    s = set_score({1, 2}, {1})
    assert (s.precision, s.recall) == (0.5, 1.0)
    assert abs(s.f1 - 2 / 3) <= 1e-15
    assert not s.exact_match

    s = set_score({3, 7}, {3, 7})
    assert (s.precision, s.recall, s.f1, s.exact_match) == (1.0, 1.0, 1.0, True)


def test_set_score_empty_conventions():
    both = set_score(set(), set())
    assert (both.precision, both.recall, both.exact_match) == (1.0, 1.0, True)
    empty_pred = set_score(set(), {1})
    assert (empty_pred.precision, empty_pred.recall, empty_pred.f1) == (0.0, 0.0, 0.0)
    empty_truth = set_score({1}, set())
    assert empty_truth.recall == 0.0
    assert not empty_truth.exact_match


def test_set_score_bounds_and_f1_identity():
    import random
    rng = random.Random(0)
    for _ in range(200):
        pred = set(rng.sample(range(20), rng.randint(0, 10)))
        truth = set(rng.sample(range(20), rng.randint(0, 10)))
        s = set_score(pred, truth)
        assert 0.0 <= s.precision <= 1.0
        assert 0.0 <= s.recall <= 1.0
        assert 0.0 <= s.f1 <= 1.0
        if s.precision + s.recall > 0:
            assert abs(s.f1 - 2 * s.precision * s.recall / (s.precision + s.recall)) <= 1e-15
        else:
            assert s.f1 == 0.0
        if s.exact_match:
            assert s.precision == s.recall == s.f1 == 1.0


def test_length_error():
    assert length_error(5, 5) == 0
    assert length_error(3, 8) == 5
    with pytest.raises(ValueError):
        length_error(-1, 3)


def test_wer_examples():
    assert wer(["a", "b", "c"], ["a", "b", "c"]) == 0.0
    assert abs(wer(["a", "b", "c"], ["a", "x", "c"]) - 1 / 3) <= 1e-15
    assert wer(["a"], ["x", "y", "z"]) == 3.0
    assert wer([1, 2], []) == 1.0


def test_wer_empty_reference_rejected():
    with pytest.raises(ValueError):
        wer([], [1])
