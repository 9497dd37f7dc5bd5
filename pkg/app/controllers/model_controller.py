# ./app/controllers/model_controller.py
# Comandos de preparação: treino dos modelos de sequência, do LM, tabela idf
# e filtro do corpus por tamanho da referência.

import click
from flask import Blueprint

from app.config import require
from app.controllers.cli_support import (corpus_options, encode_pairs, handled_errors, load_corpus,
                                         run_options, start_run, training_split)
from app.models.vocabulary import Vocabulary
from app.services.corpus_service import BUCKETS, length_bucket, persist, read_lines
from app.services.rerank_service import build_idf, save_idf
from app.services.seqmodel_service import fingerprint, save_model, train_backward, train_fusion, train_lm

model_bp = Blueprint('model_bp', __name__, cli_group=None)


@model_bp.cli.command('train-model')
@click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus paralelo de treino.')
@corpus_options
@click.option('--order', type=int, help='Ordem do LM do alvo.')
@click.option('--lam', type=float, help='Peso do LM na fusão (lambda).')
@click.option('--alpha', type=float, help='Suavização add-alfa.')
@click.option('--backward/--forward', help='Treina o modelo reverso p(X|Y).')
@click.option('--out', type=click.Path(dir_okay=False), help='Arquivo JSON do modelo.')
@run_options
@click.pass_context
def train_model_command(ctx, config_path, seed, **params):
    """Treina o modelo de fusão p(Y|X), ou p(X|Y) com --backward."""
    config = start_run(ctx, 'train-model', params, config_path, seed)
    with handled_errors():
        require(config, 'corpus', 'out')
        corpus = training_split(load_corpus(config))
        source_vocab = Vocabulary.from_sentences(corpus.sources)
        target_vocab = Vocabulary.from_sentences(corpus.targets)
        pairs = encode_pairs(corpus, source_vocab, target_vocab)
        train = train_backward if config['backward'] else train_fusion
        model = train(pairs, config['order'], config['lam'], config['alpha'], source_vocab, target_vocab)
        save_model(model, config['out'])
    click.echo(f"modelo {model.kind} salvo em {config['out']} ({fingerprint(model)[:12]})")


@model_bp.cli.command('train-lm')
@click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus paralelo de treino.')
@corpus_options
@click.option('--side', type=click.Choice(['source', 'target']), help='Lado do corpus usado no LM.')
@click.option('--order', type=int, help='Ordem do n-grama.')
@click.option('--alpha', type=float, help='Suavização add-alfa.')
@click.option('--out', type=click.Path(dir_okay=False), help='Arquivo JSON do LM.')
@run_options
@click.pass_context
def train_lm_command(ctx, config_path, seed, **params):
    """Treina o LM n-grama de um dos lados do corpus."""
    config = start_run(ctx, 'train-lm', params, config_path, seed)
    with handled_errors():
        require(config, 'corpus', 'out')
        corpus = training_split(load_corpus(config))
        sentences = corpus.targets if config['side'] == 'target' else corpus.sources
        vocab = Vocabulary.from_sentences(sentences)
        lm = train_lm([vocab.encode(s) for s in sentences], config['order'], config['alpha'], vocab)
        save_model(lm, config['out'])
    click.echo(f"LM salvo em {config['out']} ({fingerprint(lm)[:12]})")


@model_bp.cli.command('idf')
@click.option('--documents', type=click.Path(dir_okay=False), help='Um documento por linha.')
@click.option('--lowercase/--no-lowercase', help='Converte o texto para minúsculas.')
@click.option('--out', type=click.Path(dir_okay=False), help='Tabela idf em JSON.')
@run_options
@click.pass_context
def idf_command(ctx, config_path, seed, **params):
    """Calcula a tabela idf usada pela característica tf-idf."""
    config = start_run(ctx, 'idf', params, config_path, seed)
    with handled_errors():
        require(config, 'documents', 'out')
        documents = [doc for doc in read_lines(config['documents'], config['lowercase']) if doc]
        table = build_idf(documents)
        save_idf(table, config['out'])
    click.echo(f"idf de {len(table)} tokens salvo em {config['out']}")


@model_bp.cli.command('bucket')
@click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus de entrada.')
@corpus_options
@click.option('--bucket', type=click.Choice(BUCKETS), help='natural, short (<= 6) ou long (> 16).')
@click.option('--out', type=click.Path(dir_okay=False), help='Corpus filtrado.')
@run_options
@click.pass_context
def bucket_command(ctx, config_path, seed, **params):
    """Filtra o corpus pelo tamanho da referência."""
    config = start_run(ctx, 'bucket', params, config_path, seed)
    with handled_errors():
        require(config, 'corpus', 'out')
        corpus = load_corpus(config)
        filtered = length_bucket(corpus, config['bucket'])
        persist(filtered, config['out'], config['format'])
    click.echo(f"{len(filtered)}/{len(corpus)} pares na faixa '{config['bucket']}'")
