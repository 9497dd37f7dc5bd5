import math

import numpy as np
import pytest

from app.errors import ConfigError, InputError, StateError, TrainingError
from app.models.ngram import NGramLM
from app.models.tabular import TabularModel
from app.models.vocabulary import Vocabulary
from app.services.seqmodel_service import (load_model, save_model, sequence_logprob, swap_pairs,
                                           train_backward, train_fusion, train_lm)


@pytest.fixture
def small_pairs():
    source_vocab = Vocabulary.from_sentences([['o', 'gato'], ['o', 'cao'], ['um', 'gato']])
    target_vocab = Vocabulary.from_sentences([['the', 'cat'], ['the', 'dog'], ['a', 'cat']])
    raw = [(['o', 'gato'], ['the', 'cat']), (['o', 'cao'], ['the', 'dog']), (['um', 'gato'], ['a', 'cat'])]
    pairs = [(source_vocab.encode(s), target_vocab.encode(t)) for s, t in raw]
    return pairs, source_vocab, target_vocab


def test_tabular_lookup_returns_log_of_entry(bc_model):
    logprobs = bc_model.next_logprobs((0,), ())
    assert logprobs[0] == pytest.approx(math.log(0.7))
    assert logprobs[1] == pytest.approx(math.log(0.2))
    assert logprobs[3] == pytest.approx(math.log(0.1))
    assert logprobs[2] == -math.inf


def test_unseen_state_uses_default(bc_model):
    logprobs = bc_model.next_logprobs((1,), ())
    assert np.allclose(np.exp(logprobs), 0.25)


def test_sequence_logprob_sums_without_implicit_eos(bc_model):
    assert sequence_logprob(bc_model, (0,), ()) == 0.0
    assert sequence_logprob(bc_model, (0,), (0,)) == pytest.approx(math.log(0.7))
    assert sequence_logprob(bc_model, (0,), (0, 1, 3)) == pytest.approx(math.log(0.7 * 0.8 * 0.9))


def test_prefix_with_eos_is_state_error(bc_model):
    with pytest.raises(StateError):
        bc_model.next_logprobs((0,), (3,))


def test_invalid_token_is_input_error(bc_model):
    with pytest.raises(InputError):
        bc_model.next_logprobs((0,), (9,))
    with pytest.raises(InputError):
        bc_model.next_logprobs((7,), ())


def test_tabular_requires_default(target_vocab, source_vocab):
    with pytest.raises(ConfigError):
        TabularModel(target_vocab, source_vocab, {}, None)


def test_tabular_rejects_unnormalized_distribution(target_vocab, source_vocab):
    with pytest.raises(InputError):
        TabularModel(target_vocab, source_vocab, {}, [0.5, 0.5, 0.5, 0.0])


def test_fusion_lexical_ratio_by_hand():
    source_vocab = Vocabulary(tokens=('x', '</s>'), eos_id=1)
    target_vocab = Vocabulary(tokens=('y', 'z', '</s>'), eos_id=2)
    model = train_fusion([((0,), (0,))], order=1, lam=0.5, alpha=1.0,
                         source_vocab=source_vocab, target_vocab=target_vocab)
    assert model.lex_probs[0, 0] == pytest.approx(0.5)


def test_fusion_lambda_one_ignores_source(small_pairs):
    pairs, source_vocab, target_vocab = small_pairs
    model = train_fusion(pairs, order=2, lam=1.0, alpha=0.1,
                         source_vocab=source_vocab, target_vocab=target_vocab)
    expected = np.log(model.target_lm.conditional((0,)))
    for source in [(0,), (1, 2), (0, 1, 3)]:
        assert np.allclose(model.next_logprobs(source, (0,)), expected)


def test_train_lm_unigram_by_hand():
    vocab = Vocabulary(tokens=('a', '</s>'), eos_id=1)
    lm = train_lm([(0,)], order=1, alpha=1.0, vocab=vocab)
    assert math.exp(lm.next_logprobs((), ())[0]) == pytest.approx(0.5)


def test_conditionals_are_normalized_and_positive(small_pairs):
    pairs, source_vocab, target_vocab = small_pairs
    model = train_fusion(pairs, order=3, lam=0.4, alpha=0.1,
                         source_vocab=source_vocab, target_vocab=target_vocab)
    rng = np.random.default_rng(0)
    body = [t for t in range(target_vocab.size) if t != target_vocab.eos_id]
    for _ in range(200):
        source = tuple(int(s) for s in rng.integers(0, source_vocab.size - 1, size=rng.integers(1, 4)))
        prefix = tuple(int(t) for t in rng.choice(body, size=rng.integers(0, 4)))
        probs = np.exp(model.next_logprobs(source, prefix))
        assert abs(probs.sum() - 1.0) <= 1e-6
        assert np.all(probs > 0)


def test_larger_alpha_moves_toward_uniform(small_pairs):
    pairs, _, target_vocab = small_pairs
    corpus = [tgt for _, tgt in pairs]
    uniform = 1.0 / target_vocab.size
    distances = []
    for alpha in (0.01, 0.1, 1.0, 10.0):
        lm = train_lm(corpus, order=2, alpha=alpha, vocab=target_vocab)
        distances.append(np.abs(lm.conditional((0,)) - uniform).max())
    assert all(b <= a for a, b in zip(distances, distances[1:]))


def test_backward_model_is_forward_model_of_swapped_corpus(small_pairs):
    pairs, source_vocab, target_vocab = small_pairs
    backward = train_backward(pairs, 2, 0.5, 0.1, source_vocab, target_vocab)
    swapped = train_fusion(swap_pairs(pairs), 2, 0.5, 0.1,
                           source_vocab=target_vocab, target_vocab=source_vocab)
    assert backward.fingerprint() == swapped.fingerprint()
    assert backward.vocab == source_vocab


def test_empty_corpus_is_training_error(target_vocab, source_vocab):
    with pytest.raises(TrainingError):
        train_fusion([], 2, 0.5, 0.1, source_vocab, target_vocab)
    with pytest.raises(TrainingError):
        train_lm([], 2, 0.1, target_vocab)


def test_persisted_models_reload_exactly(tmp_path, small_pairs, bc_model):
    pairs, source_vocab, target_vocab = small_pairs
    fusion = train_fusion(pairs, 2, 0.5, 0.1, source_vocab, target_vocab)
    for model in (fusion, fusion.target_lm, bc_model):
        path = tmp_path / f'{model.kind}.json'
        save_model(model, path)
        loaded = load_model(path)
        assert type(loaded) is type(model)
        assert loaded.fingerprint() == model.fingerprint()
        assert np.array_equal(loaded.next_logprobs((0,), (0,)), model.next_logprobs((0,), (0,)))


def test_unigram_counts_include_eos():
    vocab = Vocabulary(tokens=('p', 'q', '</s>'), eos_id=2)
    lm = NGramLM.from_corpus([(0, 0, 1)], vocab, order=2, alpha=1.0)
    assert lm.unigram_counts().tolist() == [2, 1, 1]


def test_vocabulary_from_sentences():
    vocab = Vocabulary.from_sentences([['b', 'a'], ['a', 'c']])
    assert vocab.tokens == ('b', 'a', 'c', '<unk>', '</s>')
    assert vocab.eos_id == 4
    assert vocab.encode(['a', 'zebra']) == (1, 3)
    assert vocab.detokenize((0, 2, 4)) == 'b c'


def test_vocabulary_rejects_reserved_eos_in_corpus():
    with pytest.raises(InputError):
        Vocabulary.from_sentences([['a', '</s>']])


def test_closed_vocabulary_rejects_unknown_word(target_vocab):
    with pytest.raises(InputError):
        target_vocab.encode(['zebra'])
