import math

import numpy as np
import pytest

from app.errors import InputError
from app.models.features import BASE_FEATURES, FEATURE_NAMES, FeatureWeights
from app.models.hypothesis import DecodeParams
from app.models.policy import BaselineEstimator, DiversityPolicy, FeatureStandardizer, GammaGrid
from app.models.tabular import TabularModel
from app.models.vocabulary import Vocabulary
from app.services.decoder_service import decode
from app.services.diverserl_service import (FEATURE_DIM, RerankSetup, SourceFeaturizer, TrainingSchedule,
                                            choose_gamma, decode_with_policy, featurize_source, load_policy,
                                            policy_probs, reinforce_step, sample_action, save_policy,
                                            sweep_gamma, train_policy, write_training_log)
from app.services.metrics_service import sentence_bleu_smoothed
from app.services.rerank_service import DevItem, MertConfig, build_idf, featurize_nbest, mert_tune, selection_bleu
from app.services.seqmodel_service import train_lm

BANDIT_PARAMS = DecodeParams(beam_size=2, min_len=1, max_len=2, nbest_cap=5)


@pytest.fixture
def bandit_target_vocab():
    return Vocabulary(tokens=('a', 'b', 'c', 'd', '</s>'), eos_id=4)


@pytest.fixture
def bandit_source_vocab():
    return Vocabulary.from_sentences([['p'], ['q']])


@pytest.fixture
def bandit_model(bandit_target_vocab, bandit_source_vocab):
    """Com K = 2 o top-1 é 'a c' para gamma < 0.341 e 'b c' acima disso."""
    tail_a = {'</s>': 0.1, 'a': 0.3, 'b': 0.3, 'c': 0.2, 'd': 0.1}
    return TabularModel.from_surface(bandit_target_vocab, bandit_source_vocab, {
        (None, ()): {'a': 0.5, 'b': 0.4, 'c': 0.05, 'd': 0.04, '</s>': 0.01},
        (None, ('a',)): {'c': 0.5, 'd': 0.45, 'a': 0.02, 'b': 0.02, '</s>': 0.01},
        (None, ('b',)): {'c': 0.4, 'd': 0.35, 'a': 0.1, 'b': 0.14, '</s>': 0.01},
        (None, ('a', 'c')): tail_a,
        (None, ('a', 'd')): tail_a,
        (None, ('b', 'c')): {'</s>': 1.0},
        (None, ('b', 'd')): {'</s>': 1.0},
    }, default={w: 0.2 for w in bandit_target_vocab.tokens})


@pytest.fixture
def bandit_pairs(bandit_source_vocab, bandit_target_vocab):
    """Classe A (origens curtas de 'p') pede 'a c'; classe B (origens longas de 'q') pede 'b c'."""
    raw = [(['p'], 'a c'), (['q'] * 5, 'b c'), (['p', 'p'], 'a c'), (['q'] * 6, 'b c')]
    return [(bandit_source_vocab.encode(src), bandit_target_vocab.encode(tgt.split())) for src, tgt in raw]


@pytest.fixture
def bandit_featurizer(bandit_pairs, bandit_source_vocab):
    src_lm = train_lm([src for src, _ in bandit_pairs], order=1, alpha=1.0, vocab=bandit_source_vocab)
    return SourceFeaturizer(src_lm)


def _random_policy(rng, grid_size=4, dim=FEATURE_DIM):
    grid = GammaGrid(tuple(0.25 * i for i in range(grid_size)))
    return DiversityPolicy(grid, rng.normal(size=(dim, dim)), rng.normal(size=(grid_size, dim)))


# --- Representação da origem ---

def test_featurize_source_by_hand():
    vocab = Vocabulary(tokens=('p', 'q', '</s>'), eos_id=2)
    lm = train_lm([(0, 0, 1)], order=1, alpha=1.0, vocab=vocab)
    h = featurize_source((0, 1), lm)
    expected = [1.0, 2.0, 4.0, (math.log(3 / 7) + math.log(2 / 7)) / 2, 1.0, 0.5]
    assert h == pytest.approx(expected)


def test_standardizer_keeps_bias_component():
    rows = [[1.0, 2.0, 5.0], [1.0, 4.0, 5.0]]
    standardizer = FeatureStandardizer.fit(rows)
    assert standardizer.mean[0] == 0.0 and standardizer.std[0] == 1.0
    assert standardizer.std[2] == 1.0
    assert standardizer.apply([1.0, 2.0, 5.0]) == pytest.approx([1.0, -1.0, 0.0])


# --- Política ---

def test_initial_policy_is_uniform():
    grid = GammaGrid((0.0, 0.5, 1.0))
    policy = DiversityPolicy.initial(grid, FEATURE_DIM)
    assert policy.probs(np.arange(FEATURE_DIM, dtype=float)) == pytest.approx([1 / 3] * 3)


def test_probs_are_normalized_and_shift_invariant():
    rng = np.random.default_rng(0)
    for _ in range(50):
        policy = _random_policy(rng)
        h = rng.normal(size=FEATURE_DIM)
        probs = policy_probs(policy, h)
        assert abs(probs.sum() - 1.0) <= 1e-9
        assert np.array_equal(probs, policy.probs(h))
        logits = policy.logits(h)
        shifted = np.exp(logits + 5.0 - (logits + 5.0).max())
        assert probs == pytest.approx(shifted / shifted.sum())
        assert math.exp(policy.log_prob(h, 1)) == pytest.approx(probs[1])


def test_policy_rejects_wrong_dimension():
    policy = DiversityPolicy.initial(GammaGrid((0.0, 1.0)), FEATURE_DIM)
    with pytest.raises(InputError):
        policy.probs(np.ones(FEATURE_DIM + 1))


def test_gamma_grid_validation():
    with pytest.raises(InputError):
        GammaGrid(())
    with pytest.raises(InputError):
        GammaGrid((0.5, 0.5))
    with pytest.raises(InputError):
        GammaGrid((-0.1, 0.5))
    regular = GammaGrid.regular()
    assert len(regular) == 21
    assert regular[0] == 0.0 and regular[-1] == 1.0 and regular[3] == 0.15
    assert len(GammaGrid.regular(0.0, 0.5, 0.25)) == 3


def test_degenerate_policy_always_picks_its_action():
    grid = GammaGrid((0.0, 0.5, 1.0))
    policy = DiversityPolicy.initial(grid, FEATURE_DIM)
    policy.embeddings[2, 0] = 50.0
    h = np.eye(FEATURE_DIM)[0]
    picks = [sample_action(policy, h, seed) for seed in range(1000)]
    assert picks.count(2) / len(picks) >= 0.999
    assert choose_gamma(policy, h) == 2


@pytest.mark.slow
def test_sampling_frequencies_match_probabilities():
    rng = np.random.default_rng(1)
    policy = _random_policy(rng)
    h = rng.normal(size=FEATURE_DIM)
    probs = policy.probs(h)
    draws = 20000
    generator = np.random.default_rng(2)
    counts = np.bincount([sample_action(policy, h, generator) for _ in range(draws)], minlength=len(probs))
    sigma = np.sqrt(draws * probs * (1 - probs))
    assert np.all(np.abs(counts - draws * probs) <= 4 * sigma)


def test_sampling_is_reproducible_for_a_seed():
    policy = _random_policy(np.random.default_rng(3))
    h = np.ones(FEATURE_DIM)
    first = [sample_action(policy, h, np.random.default_rng([9, i])) for i in range(30)]
    second = [sample_action(policy, h, np.random.default_rng([9, i])) for i in range(30)]
    assert first == second


# --- REINFORCE ---

def test_reward_equal_to_baseline_leaves_policy_unchanged():
    policy = _random_policy(np.random.default_rng(4))
    baseline = BaselineEstimator.zeros(FEATURE_DIM)
    update = reinforce_step(policy, baseline, np.ones(FEATURE_DIM), 1, 0.0, lr_policy=1.0, lr_baseline=0.1)
    assert update.advantage == 0.0
    assert np.array_equal(update.policy.projection, policy.projection)
    assert np.array_equal(update.policy.embeddings, policy.embeddings)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    eps = 1e-6
    for _ in range(100):
        policy = _random_policy(rng)
        h = rng.normal(size=FEATURE_DIM)
        action = int(rng.integers(0, len(policy.grid)))
        d_projection, d_embeddings = policy.grad_log_prob(h, action)
        for param, analytic in ((policy.projection, d_projection), (policy.embeddings, d_embeddings)):
            numeric = np.zeros_like(param)
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + eps
                up = policy.log_prob(h, action)
                param[index] = original - eps
                down = policy.log_prob(h, action)
                param[index] = original
                numeric[index] = (up - down) / (2 * eps)
            scale = max(np.abs(analytic).max(), 1.0)
            assert np.abs(numeric - analytic).max() / scale <= 1e-5


def test_update_moves_probability_toward_rewarded_action():
    policy = _random_policy(np.random.default_rng(6))
    h = np.ones(FEATURE_DIM) / FEATURE_DIM
    before = policy.probs(h)[2]
    update = reinforce_step(policy, BaselineEstimator.zeros(FEATURE_DIM), h, 2, 1.0, 0.1, 0.01)
    assert update.policy.probs(h)[2] > before
    assert update.policy is not policy


def test_baseline_error_shrinks():
    baseline = BaselineEstimator.zeros(3)
    h = np.array([1.0, 0.5, -0.5])
    errors = []
    for _ in range(20):
        errors.append(abs(0.8 - baseline.predict(h)))
        baseline = baseline.updated(h, 0.8, lr=0.1)
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_non_finite_reward_is_rejected():
    policy = _random_policy(np.random.default_rng(7))
    baseline = BaselineEstimator.zeros(FEATURE_DIM)
    update = reinforce_step(policy, baseline, np.ones(FEATURE_DIM), 0, math.nan, 0.1, 0.1)
    assert not update.accepted
    assert update.policy is policy and update.baseline is baseline


def test_learned_baseline_reduces_gradient_variance():
    rng = np.random.default_rng(8)
    grid = GammaGrid((0.0, 0.5, 1.0))
    policy = DiversityPolicy.initial(grid, FEATURE_DIM)
    baseline = BaselineEstimator.zeros(FEATURE_DIM)
    h = np.eye(FEATURE_DIM)[0]
    mean_reward = np.array([0.6, 0.7, 0.8])
    plain, centered = [], []
    for i in range(4000):
        action = sample_action(policy, h, rng)
        reward = mean_reward[action] + rng.normal(scale=0.05)
        # lr_policy = 0: a distribuição amostrada fica fixa e só o baseline aprende
        update = reinforce_step(policy, baseline, h, action, reward, lr_policy=0.0, lr_baseline=0.05)
        baseline = update.baseline
        if i < 500:
            continue
        grad = policy.grad_log_prob(h, action)[1][0, 0]
        plain.append(reward * grad)
        centered.append(update.advantage * grad)
    assert baseline.predict(h) == pytest.approx(mean_reward.mean(), abs=0.05)
    assert np.var(centered) / np.var(plain) < 1.0


# --- Treinamento ---

def test_bandit_outputs_switch_with_gamma(bandit_model):
    low = decode(bandit_model, (0,), BANDIT_PARAMS.with_gamma(0.0)).top
    high = decode(bandit_model, (0,), BANDIT_PARAMS.with_gamma(0.8)).top
    assert bandit_model.vocab.detokenize(low.tokens) == 'a c'
    assert bandit_model.vocab.detokenize(high.tokens) == 'b c'
    assert sentence_bleu_smoothed(('b', 'c'), ('a', 'c')) == pytest.approx(math.sqrt(0.5))


def test_single_gamma_grid_matches_fixed_gamma_decoding(bandit_model, bandit_pairs, bandit_featurizer):
    grid = GammaGrid((0.8,))
    result = train_policy(bandit_model, bandit_pairs, grid, BANDIT_PARAMS,
                          TrainingSchedule(num_instances=8), bandit_featurizer)
    assert len(result.rewards) == 8
    for record in result.rewards:
        source = bandit_pairs[record.source_id][0]
        fixed = decode(bandit_model, source, BANDIT_PARAMS.with_gamma(0.8)).top
        assert record.gamma == 0.8 and record.action == 0
        assert record.text == bandit_model.vocab.detokenize(fixed.tokens)


def test_training_with_same_seed_is_reproducible(bandit_model, bandit_pairs, bandit_source_vocab):
    grid = GammaGrid((0.0, 0.8))
    schedule = TrainingSchedule(num_instances=20, seed=3)
    logs = []
    for _ in range(2):
        src_lm = train_lm([src for src, _ in bandit_pairs], 1, 1.0, bandit_source_vocab)
        result = train_policy(bandit_model, bandit_pairs, grid, BANDIT_PARAMS, schedule, SourceFeaturizer(src_lm))
        logs.append([entry.to_dict() for entry in result.log])
    assert logs[0] == logs[1]


def test_periodic_retuning_keeps_models_frozen(tmp_path, bandit_model, bandit_pairs, bandit_featurizer,
                                               bandit_source_vocab, bandit_target_vocab):
    bwd_model = TabularModel(bandit_source_vocab, bandit_target_vocab, {}, [0.25] * 4)
    lm = TabularModel(bandit_target_vocab, bandit_target_vocab, {}, [0.2] * 5)
    fingerprints = [m.fingerprint() for m in (bandit_model, bwd_model, lm)]
    rerank = RerankSetup(bwd_model=bwd_model, lm=lm, weights=FeatureWeights.unit(BASE_FEATURES),
                         dev=[(src, [tgt]) for src, tgt in bandit_pairs],
                         mert=MertConfig(restarts=1, max_iters=2))
    result = train_policy(bandit_model, bandit_pairs, GammaGrid((0.0, 0.8)), BANDIT_PARAMS,
                          TrainingSchedule(num_instances=35, retune_every=10), bandit_featurizer, rerank=rerank)
    assert [event.instance for event in result.retunes] == [9, 19, 29]
    assert len(result.rewards) == 35
    assert result.weights.names == BASE_FEATURES
    assert [m.fingerprint() for m in (bandit_model, bwd_model, lm)] == fingerprints

    log_path = tmp_path / 'train.jsonl'
    write_training_log(result.log, log_path)
    assert len(log_path.read_text(encoding='utf-8').splitlines()) == 38


def test_training_without_pairs_is_input_error(bandit_model, bandit_featurizer):
    with pytest.raises(InputError):
        train_policy(bandit_model, [], GammaGrid((0.0,)), BANDIT_PARAMS, TrainingSchedule(), bandit_featurizer)


@pytest.mark.slow
def test_policy_learns_per_source_gamma(bandit_model, bandit_pairs, bandit_featurizer):
    grid = GammaGrid((0.0, 0.8))
    schedule = TrainingSchedule(num_instances=2000, lr_policy=0.1, lr_baseline=0.05, seed=0)
    result = train_policy(bandit_model, bandit_pairs, grid, BANDIT_PARAMS, schedule, bandit_featurizer)
    expected = [0, 1, 0, 1]
    chosen = [choose_gamma(result.policy, bandit_featurizer(src)) for src, _ in bandit_pairs]
    assert chosen == expected
    late = result.rewards[-200:]
    assert sum(r.reward for r in late) / len(late) > 0.9


def _class_sources(rng, count):
    """Classe 0: origens curtas, quase só 'p'; classe 1: origens longas, quase só 'q'."""
    rows = []
    for _ in range(count):
        label = int(rng.integers(0, 2))
        length = int(rng.integers(1, 4)) if label == 0 else int(rng.integers(6, 10))
        main, other = ('p', 'q') if label == 0 else ('q', 'p')
        rows.append(([main if rng.random() < 0.8 else other for _ in range(length)], label))
    return rows


@pytest.mark.slow
def test_policy_is_reward_optimal_on_held_out_sources(bandit_model, bandit_source_vocab, bandit_target_vocab):
    grid = GammaGrid((0.0, 0.8))
    references = {0: ('a', 'c'), 1: ('b', 'c')}
    for label, reference in references.items():
        rewards = []
        for gamma in grid.values:
            top = decode(bandit_model, (0,), BANDIT_PARAMS.with_gamma(gamma)).top
            rewards.append(sentence_bleu_smoothed(bandit_model.vocab.detokenize(top.tokens).split(), reference))
        assert int(np.argmax(rewards)) == label

    rng = np.random.default_rng(31)
    train, held_out = _class_sources(rng, 400), _class_sources(rng, 500)
    pairs = [(bandit_source_vocab.encode(words), bandit_target_vocab.encode(list(references[label])))
             for words, label in train]
    featurizer = SourceFeaturizer(train_lm([src for src, _ in pairs], order=1, alpha=1.0, vocab=bandit_source_vocab))
    schedule = TrainingSchedule(num_instances=4000, lr_policy=0.1, lr_baseline=0.02, seed=0)
    result = train_policy(bandit_model, pairs, grid, BANDIT_PARAMS, schedule, featurizer)
    assert len(result.rewards) <= 5000

    optimal = sum(1 for words, label in held_out
                  if choose_gamma(result.policy, featurizer(bandit_source_vocab.encode(words))) == label)
    assert optimal >= 0.95 * len(held_out)


def test_decode_with_policy_uses_chosen_gamma(bandit_model, bandit_pairs, bandit_featurizer):
    bandit_featurizer.fit([src for src, _ in bandit_pairs])
    grid = GammaGrid((0.0, 0.8))
    policy = DiversityPolicy.initial(grid, FEATURE_DIM, bandit_featurizer.standardizer)
    # Origens longas (componente |X| padronizada positiva) preferem gamma = 0.8
    policy.embeddings[1, 1] = 10.0
    sources = [src for src, _ in bandit_pairs]
    results, gammas = decode_with_policy(bandit_model, sources, policy, bandit_featurizer, BANDIT_PARAMS)
    assert gammas == [0.0, 0.8, 0.0, 0.8]
    for source, gamma, nbest in zip(sources, gammas, results):
        assert nbest == decode(bandit_model, source, BANDIT_PARAMS.with_gamma(gamma))


def test_policy_file_round_trip(tmp_path):
    policy = _random_policy(np.random.default_rng(9))
    baseline = BaselineEstimator(weights=np.arange(FEATURE_DIM, dtype=float))
    path = tmp_path / 'policy.json'
    save_policy(policy, baseline, path)
    loaded, loaded_baseline = load_policy(path)
    h = np.linspace(-1, 1, FEATURE_DIM)
    assert loaded.probs(h) == pytest.approx(policy.probs(h))
    assert loaded_baseline.predict(h) == pytest.approx(baseline.predict(h))


# --- Varredura ---

def test_sweep_gamma_scores_every_value(bandit_model, bandit_pairs):
    pairs = [(src, [tgt]) for src, tgt in bandit_pairs]
    result = sweep_gamma(bandit_model, pairs, GammaGrid((0.0, 0.4, 0.8)), BANDIT_PARAMS)
    assert list(result.bleu_by_gamma) == [0.0, 0.4, 0.8]
    assert all(0.0 <= b <= 100.0 for b in result.bleu_by_gamma.values())
    # Saídas de dois tokens não têm 4-gramas: BLEU 0 em toda a grade e o empate vai ao menor gamma
    assert result.best_gamma == 0.0
    with pytest.raises(InputError):
        sweep_gamma(bandit_model, [], GammaGrid((0.0,)), BANDIT_PARAMS)


TRAP_WORDS = 12


def _trap_vocabularies():
    words = tuple(f'w{i}' for i in range(TRAP_WORDS))
    source_vocab = Vocabulary(tokens=words + ('</s>',), eos_id=TRAP_WORDS)
    target_vocab = Vocabulary(tokens=words + ('z0', 'z1', 'z2', '</s>'), eos_id=TRAP_WORDS + 3)
    return source_vocab, target_vocab


def _peaked(size, peaks):
    """Probabilidades fixas nos ids de peaks; o restante é dividido por igual entre os demais."""
    vec = np.full(size, (1.0 - sum(peaks.values())) / (size - len(peaks)))
    for token, p in peaks.items():
        vec[token] = p
    return vec


def _trap_rows(rng, count, length=5):
    """(origem, p do desvio z0, p de cada passo do caminho certo); a referência copia a origem."""
    return [(tuple(int(w) for w in rng.choice(TRAP_WORDS, size=length, replace=False)),
             float(rng.uniform(0.35, 0.6)), float(rng.uniform(0.5, 0.95))) for _ in range(count)]


def _trap_model(rows, source_vocab, target_vocab):
    """
    O primeiro passo prefere o desvio z0, cujos dois filhos empatados tiram a cópia
    de um feixe K = 2 sem penalidade quando 0.45 * p_z0 > 0.3 * p_passo.
    """
    size = target_vocab.size
    z0, z1, z2 = (target_vocab.index(t) for t in ('z0', 'z1', 'z2'))
    entries = {(None, (z0,)): _peaked(size, {z1: 0.45, z2: 0.45})}
    for source, p_decoy, p_next in rows:
        entries[(source, ())] = _peaked(size, {z0: p_decoy, source[0]: 0.3})
        for i in range(1, len(source)):
            entries[(source, source[:i])] = _peaked(size, {source[i]: p_next})
        entries[(source, source)] = _peaked(size, {target_vocab.eos_id: 0.9})
    return TabularModel(target_vocab, source_vocab, entries, np.full(size, 1.0 / size))


def _featurized_items(model, rows, params, bwd_model, lm, idf):
    items = []
    for source, _, _ in rows:
        nbest = decode(model, source, params)
        entries = featurize_nbest(source, nbest, model, bwd_model, lm, idf, use_tfidf=True)
        items.append(DevItem(source, entries, (source,)))
    return items


@pytest.mark.slow
def test_best_dev_gamma_keeps_reranked_test_bleu():
    source_vocab, target_vocab = _trap_vocabularies()
    bwd_model = TabularModel(source_vocab, target_vocab, {}, np.full(source_vocab.size, 1.0 / source_vocab.size))
    lm = TabularModel(target_vocab, target_vocab, {}, np.full(target_vocab.size, 1.0 / target_vocab.size))
    grid = GammaGrid((0.0, 0.5, 1.0))
    params = DecodeParams(beam_size=2)
    differences = []
    for seed in range(10):
        rng = np.random.default_rng([23, seed])
        dev_rows, test_rows = _trap_rows(rng, 40), _trap_rows(rng, 40)
        model = _trap_model(dev_rows + test_rows, source_vocab, target_vocab)
        idf = build_idf([source for source, _, _ in dev_rows])
        dev_bleu, test_bleu = {}, {}
        for gamma in grid.values:
            dev = _featurized_items(model, dev_rows, params.with_gamma(gamma), bwd_model, lm, idf)
            tuned = mert_tune(dev, FeatureWeights.unit(FEATURE_NAMES),
                              MertConfig(restarts=2, max_iters=3, seed=seed), eos_id=model.eos_id)
            test = _featurized_items(model, test_rows, params.with_gamma(gamma), bwd_model, lm, idf)
            dev_bleu[gamma] = tuned.bleu
            test_bleu[gamma] = selection_bleu(test, tuned.weights, model.eos_id)
        best = max(grid.values, key=lambda g: (dev_bleu[g], -g))
        differences.append(test_bleu[best] - test_bleu[0.0])
    assert sum(1 for d in differences if d >= 0) >= 7
    assert min(differences) >= -0.1
