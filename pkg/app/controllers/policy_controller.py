# ./app/controllers/policy_controller.py
# Comandos da taxa de diversidade: treino da política por REINFORCE e
# varredura de gamma fixo na grade.

import click
from flask import Blueprint

from app.config import require
from app.controllers.cli_support import (corpus_options, decode_options, decode_params, encode_pairs, fail, fmt,
                                         handled_errors, load_corpus, parse_grid, run_options, start_run)
from app.models.features import BASE_FEATURES, FEATURE_NAMES, FeatureWeights
from app.services.diverserl_service import (RerankSetup, SourceFeaturizer, TrainingSchedule, save_policy,
                                            sweep_gamma, train_policy_service, write_training_log)
from app.services.rerank_service import MertConfig, check_compatible, idf_by_id, load_idf, load_weights
from app.services.seqmodel_service import load_model_service

policy_bp = Blueprint('policy_bp', __name__, cli_group=None)


def _load(path):
    model, error = load_model_service(path)
    if error:
        fail(error)
    return model


def _with_references(corpus, fwd):
    return [(src, [tgt]) for src, tgt in encode_pairs(corpus, fwd.source_vocab, fwd.vocab)]


def _rerank_setup(config, fwd, dev=(), weights=None):
    """Modelos auxiliares, idf e pesos iniciais do reranking."""
    require(config, 'bwd', 'lm')
    bwd, lm = _load(config['bwd']), _load(config['lm'])
    check_compatible(fwd, bwd, lm)
    idf_table = idf_by_id(load_idf(config['idf']), fwd.vocab) if config['idf'] else None
    names = FEATURE_NAMES if idf_table is not None else BASE_FEATURES
    return RerankSetup(
        bwd_model=bwd, lm=lm, weights=weights or FeatureWeights.unit(names), dev=list(dev),
        idf_table=idf_table, use_tfidf=idf_table is not None,
        mert=MertConfig(restarts=config.get('restarts', 8), max_iters=config.get('max_iters', 10),
                        seed=config.seed),
    )


def _model_options(func):
    func = click.option('--idf', type=click.Path(dir_okay=False), help='Tabela idf (ativa tf-idf).')(func)
    func = click.option('--lm', type=click.Path(dir_okay=False), help='LM do alvo (reranking).')(func)
    func = click.option('--bwd', type=click.Path(dir_okay=False), help='Modelo reverso p(X|Y) (reranking).')(func)
    func = click.option('--fwd', type=click.Path(dir_okay=False), help='Modelo direto p(Y|X).')(func)
    func = click.option('--rerank/--no-rerank', help='Escolhe a saída pelo reranker em vez do top-1.')(func)
    func = click.option('--grid', help="Grade de gamma, ex.: '0,0.25,0.5'.")(func)
    return func


@policy_bp.cli.command('train-policy')
@click.option('--train', type=click.Path(dir_okay=False), help='Corpus de treino da política.')
@click.option('--dev', type=click.Path(dir_okay=False), help='Corpus de dev (padronização e reajuste).')
@corpus_options
@_model_options
@click.option('--src-lm', type=click.Path(dir_okay=False), help='LM da origem para h_X.')
@click.option('--num-instances', type=int, help='Instâncias de treino.')
@click.option('--retune-every', type=int, help='Reajusta os pesos a cada N instâncias.')
@click.option('--lr-policy', type=float, help='Taxa de aprendizado da política.')
@click.option('--lr-baseline', type=float, help='Taxa de aprendizado do baseline.')
@click.option('--restarts', type=int, help='Reinícios do MERT nos reajustes.')
@click.option('--max-iters', type=int, help='Iterações do MERT por reinício.')
@decode_options
@click.option('--out', type=click.Path(dir_okay=False), help='Política treinada em JSON.')
@click.option('--log', type=click.Path(dir_okay=False), help='Log de treino (JSON-lines).')
@run_options
@click.pass_context
def train_policy_command(ctx, config_path, seed, **params):
    """Treina a política de gamma por entrada com os modelos congelados."""
    config = start_run(ctx, 'train-policy', params, config_path, seed)
    with handled_errors():
        require(config, 'train', 'fwd', 'src_lm', 'out')
        fwd = _load(config['fwd'])
        pairs = encode_pairs(load_corpus(config, 'train'), fwd.source_vocab, fwd.vocab)
        dev = _with_references(load_corpus(config, 'dev'), fwd) if config['dev'] else []
        featurizer = SourceFeaturizer(_load(config['src_lm']))
        if dev:
            featurizer.fit([src for src, _ in dev])
        rerank = None
        if config['rerank']:
            require(config, 'dev')
            rerank = _rerank_setup(config, fwd, dev)
        schedule = TrainingSchedule(
            num_instances=config['num_instances'], retune_every=config['retune_every'],
            lr_policy=config['lr_policy'], lr_baseline=config['lr_baseline'], seed=config.seed,
        )
        result, error = train_policy_service(fwd, pairs, parse_grid(config['grid']), decode_params(config),
                                             schedule, featurizer, rerank)
        if error:
            fail(error)
        save_policy(result.policy, result.baseline, config['out'])
        if config['log']:
            write_training_log(result.log, config['log'])
    rewards = [record.reward for record in result.rewards]
    mean = sum(rewards) / len(rewards) if rewards else 0.0
    click.echo(f"{len(rewards)} atualizações, {len(result.retunes)} reajustes, recompensa média={fmt(mean)}")
    click.echo(f"política salva em {config['out']}")


@policy_bp.cli.command('sweep-gamma')
@click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus com referências.')
@corpus_options
@_model_options
@click.option('--weights', type=click.Path(dir_okay=False), help='Pesos do reranker em JSON.')
@decode_options
@run_options
@click.pass_context
def sweep_gamma_command(ctx, config_path, seed, **params):
    """BLEU de corpus para cada gamma fixo da grade."""
    config = start_run(ctx, 'sweep-gamma', params, config_path, seed)
    with handled_errors():
        require(config, 'corpus', 'fwd')
        fwd = _load(config['fwd'])
        pairs = _with_references(load_corpus(config), fwd)
        rerank = None
        if config['rerank']:
            weights = load_weights(config['weights']) if config['weights'] else None
            rerank = _rerank_setup(config, fwd, weights=weights)
        result = sweep_gamma(fwd, pairs, parse_grid(config['grid']), decode_params(config),
                             rerank, parallelism=config['batch'])
    for gamma, bleu in result.bleu_by_gamma.items():
        click.echo(f"gamma={gamma:.2f} BLEU={fmt(bleu)}")
    click.echo(f"melhor gamma={result.best_gamma:.2f} BLEU={fmt(result.bleu_by_gamma[result.best_gamma])}")
