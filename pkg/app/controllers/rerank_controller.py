# ./app/controllers/rerank_controller.py
# Comandos de reranking: aplica pesos lineares a listas N-best e ajusta os
# pesos por MERT em um conjunto de desenvolvimento.

import click
from flask import Blueprint

from app.config import require
from app.controllers.cli_support import (corpus_options, fail, fmt, handled_errors, load_corpus,
                                         run_options, start_run)
from app.models.features import BASE_FEATURES, FEATURE_NAMES, FeatureWeights
from app.services.decoder_service import read_nbest
from app.services.rerank_service import (DevItem, MertConfig, check_compatible, featurize_nbest, idf_by_id,
                                         load_idf, load_weights, oracle_bleu, rerank_nbest, save_weights,
                                         tune_weights_service, write_featurized)
from app.services.seqmodel_service import load_model_service

rerank_bp = Blueprint('rerank_bp', __name__, cli_group=None)


def _models(config):
    models = []
    for key in ('fwd', 'bwd', 'lm'):
        model, error = load_model_service(config[key])
        if error:
            fail(error)
        models.append(model)
    check_compatible(*models)
    return models


def _featurized_nbest(config):
    """Lê as N-best e o corpus correspondente e extrai as características."""
    require(config, 'nbest', 'corpus', 'fwd', 'bwd', 'lm')
    fwd, bwd, lm = _models(config)
    corpus = load_corpus(config)
    results = read_nbest(config['nbest'], num_sources=len(corpus))
    idf_table = idf_by_id(load_idf(config['idf']), fwd.vocab) if config['idf'] else None
    use_tfidf = idf_table is not None
    featurized = []
    for pair, nbest in zip(corpus, results):
        source = fwd.source_vocab.encode(pair.source)
        featurized.append(featurize_nbest(source, nbest, fwd, bwd, lm, idf_table, use_tfidf))
    names = FEATURE_NAMES if use_tfidf else BASE_FEATURES
    return fwd, corpus, featurized, names


def _rerank_options(func):
    func = click.option('--idf', type=click.Path(dir_okay=False), help='Tabela idf (ativa tf-idf).')(func)
    func = click.option('--lm', type=click.Path(dir_okay=False), help='LM do alvo.')(func)
    func = click.option('--bwd', type=click.Path(dir_okay=False), help='Modelo reverso p(X|Y).')(func)
    func = click.option('--fwd', type=click.Path(dir_okay=False), help='Modelo direto p(Y|X).')(func)
    func = corpus_options(func)
    func = click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus alinhado às N-best.')(func)
    func = click.option('--nbest', type=click.Path(dir_okay=False), help='Arquivo N-best.')(func)
    return func


@rerank_bp.cli.command('rerank')
@_rerank_options
@click.option('--weights', type=click.Path(dir_okay=False), help='Pesos em JSON (padrão: só fwd_logp).')
@click.option('--out', type=click.Path(dir_okay=False), help='N-best reranqueadas com características.')
@click.option('--output', type=click.Path(dir_okay=False), help='Top-1 reranqueado, uma linha por origem.')
@run_options
@click.pass_context
def rerank_command(ctx, config_path, seed, **params):
    """Reordena cada lista N-best por w . f."""
    config = start_run(ctx, 'rerank', params, config_path, seed)
    with handled_errors():
        fwd, corpus, featurized, names = _featurized_nbest(config)
        weights = load_weights(config['weights']) if config['weights'] else FeatureWeights.unit(names)
        reranked = [rerank_nbest(entries, weights) for entries in featurized]
        if config['out']:
            write_featurized(reranked, fwd.vocab, config['out'])
        if config['output']:
            with open(config['output'], 'w', encoding='utf-8') as fh:
                for entries in reranked:
                    fh.write((fwd.vocab.detokenize(entries[0][0].tokens) if entries else '') + '\n')
    click.echo(f"{len(reranked)} listas reranqueadas com {', '.join(weights.names)}")


@rerank_bp.cli.command('tune-weights')
@_rerank_options
@click.option('--restarts', type=int, help='Reinícios do MERT (o primeiro parte dos pesos iniciais).')
@click.option('--max-iters', type=int, help='Iterações de busca por coordenada por reinício.')
@click.option('--out', type=click.Path(dir_okay=False), help='Pesos ajustados em JSON.')
@run_options
@click.pass_context
def tune_weights_command(ctx, config_path, seed, **params):
    """Ajusta os pesos do reranker por MERT no conjunto de desenvolvimento."""
    config = start_run(ctx, 'tune-weights', params, config_path, seed)
    with handled_errors():
        require(config, 'out')
        fwd, corpus, featurized, names = _featurized_nbest(config)
        dev = [DevItem(fwd.source_vocab.encode(pair.source), entries, (fwd.vocab.encode(pair.target),))
               for pair, entries in zip(corpus, featurized) if entries]
        mert = MertConfig(restarts=config['restarts'], max_iters=config['max_iters'], seed=config.seed)
        result, error = tune_weights_service(dev, names, mert, fwd.eos_id)
        if error:
            fail(error)
        save_weights(result.weights, config['out'])
        oracle = oracle_bleu(dev, fwd.eos_id)
    click.echo(f"BLEU dev: inicial={fmt(result.init_bleu)} final={fmt(result.bleu)} oráculo={fmt(oracle)}")
    click.echo(f"pesos salvos em {config['out']}: " +
               ', '.join(f"{name}={fmt(value)}" for name, value in result.weights.to_dict().items()))
