import numpy as np
import pytest

from app.services.oracle_service import (exhaustive_suite, gamma_zero_suite, penalty_dominance_suite,
                                         random_tabular_model, run_oracle_check, synthetic_vocabulary)


def test_random_models_are_normalized_everywhere():
    rng = np.random.default_rng(0)
    model = random_tabular_model(rng, 6, 4)
    for prefix in [(), (0,), (1, 2), (4, 4, 4), (0, 1, 2, 3, 4)]:
        assert abs(np.exp(model.next_logprobs((0,), prefix)).sum() - 1.0) <= 1e-9


def test_synthetic_vocabulary_reserves_last_id_for_eos():
    vocab = synthetic_vocabulary(4)
    assert vocab.tokens == ('w0', 'w1', 'w2', '</s>')
    assert vocab.eos_id == 3


def test_exhaustive_oracle_small():
    report = exhaustive_suite(num_models=10, vocab_size=4, max_len=3)
    assert report.ok
    assert report.summary() == '10/10 exact matches'


@pytest.mark.slow
def test_exhaustive_oracle_fifty_models():
    assert exhaustive_suite(num_models=50, vocab_size=5, max_len=5).summary() == '50/50 exact matches'


def test_gamma_zero_equivalence():
    report = gamma_zero_suite(num_models=200)
    assert report.passed == report.total == 200


def test_penalty_dominance():
    report = penalty_dominance_suite(num_steps=100)
    assert report.passed == report.total == 100


def test_penalty_dominance_keeps_best_rank_one_children_among_extra_parents():
    report = penalty_dominance_suite(num_steps=60, seed=4, max_beam=3, max_extra_parents=12)
    assert report.ok and report.total == 60
    without_extra = penalty_dominance_suite(num_steps=20, seed=4, max_extra_parents=0)
    assert without_extra.ok


def test_run_oracle_check_reports_every_suite():
    reports = run_oracle_check(models=3, vocab=3, maxlen=3, gamma_models=6, seed=5)
    assert [r.total for r in reports] == [3, 6, 100]
    assert all(r.ok for r in reports)
