# ./tests/conftest.py
# Fixtures compartilhadas: app de teste, runner da CLI e modelos tabulares feitos à mão.

import pytest

from app import create_app
from app.models.tabular import TabularModel
from app.models.vocabulary import Vocabulary


@pytest.fixture
def app():
    app = create_app({'TESTING': True, 'LOG_LEVEL': 'WARNING'})
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def source_vocab():
    return Vocabulary(tokens=('a', 'x', '</s>'), eos_id=2)


@pytest.fixture
def target_vocab():
    return Vocabulary(tokens=('b', 'c', 'd', '</s>'), eos_id=3)


@pytest.fixture
def bc_model(target_vocab, source_vocab):
    """Para a origem 'a' a massa se concentra em 'b c EOS'."""
    return TabularModel.from_surface(target_vocab, source_vocab, {
        ('a', ()): {'b': 0.7, 'c': 0.2, '</s>': 0.1},
        ('a', ('b',)): {'c': 0.8, 'd': 0.1, '</s>': 0.1},
        ('a', ('b', 'c')): {'d': 0.1, '</s>': 0.9},
    }, default={'b': 0.25, 'c': 0.25, 'd': 0.25, '</s>': 0.25})


@pytest.fixture
def pq_model():
    """|V| = 2 + EOS, pequeno o bastante para enumerar à mão."""
    vocab = Vocabulary(tokens=('p', 'q', '</s>'), eos_id=2)
    return TabularModel.from_surface(vocab, vocab, {
        (None, ()): {'p': 0.6, 'q': 0.3, '</s>': 0.1},
        (None, ('p',)): {'p': 0.1, 'q': 0.5, '</s>': 0.4},
        (None, ('q',)): {'p': 0.05, 'q': 0.05, '</s>': 0.9},
    }, default={'p': 0.2, 'q': 0.2, '</s>': 0.6})


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / 'corpus.tsv'
    path.write_text(
        "o gato dorme\tthe cat sleeps\n"
        "o cao dorme\tthe dog sleeps\n"
        "o gato come\tthe cat eats\n"
        "o cao come\tthe dog eats\n"
        "um gato dorme\ta cat sleeps\n"
        "um cao come\ta dog eats\n",
        encoding='utf-8',
    )
    return path
