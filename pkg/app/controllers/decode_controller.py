# ./app/controllers/decode_controller.py
# Comandos de decodificação: busca em feixe (gamma fixo ou escolhido pela
# política) e a autoverificação contra oráculos.

import click
from flask import Blueprint, current_app

from app.config import require
from app.controllers.cli_support import (EXIT_FAILURE, corpus_options, decode_options, decode_params,
                                         fail, handled_errors, load_corpus, run_options, start_run)
from app.services.decoder_service import batch_decode, write_nbest
from app.services.diverserl_service import SourceFeaturizer, decode_with_policy, load_policy
from app.services.oracle_service import run_oracle_check
from app.services.seqmodel_service import load_model_service

decode_bp = Blueprint('decode_bp', __name__, cli_group=None)


def _load(path):
    model, error = load_model_service(path)
    if error:
        fail(error)
    return model


@decode_bp.cli.command('decode')
@click.option('--model', type=click.Path(dir_okay=False), help='Modelo p(Y|X) persistido.')
@click.option('--corpus', type=click.Path(dir_okay=False), help='Corpus com as origens.')
@corpus_options
@decode_options
@click.option('--policy', type=click.Path(dir_okay=False), help='Política treinada (gamma por entrada).')
@click.option('--src-lm', type=click.Path(dir_okay=False), help='LM da origem usado pela política.')
@click.option('--out', type=click.Path(dir_okay=False), help='Arquivo N-best (JSON-lines).')
@run_options
@click.pass_context
def decode_command(ctx, config_path, seed, **params):
    """Decodifica cada origem do corpus e grava as listas N-best."""
    config = start_run(ctx, 'decode', params, config_path, seed)
    with handled_errors():
        require(config, 'model', 'corpus', 'out')
        model = _load(config['model'])
        corpus = load_corpus(config)
        sources = [model.source_vocab.encode(p.source) for p in corpus]
        decoding = decode_params(config)
        if config['policy']:
            require(config, 'src_lm')
            policy, _ = load_policy(config['policy'])
            featurizer = SourceFeaturizer(_load(config['src_lm']), standardizer=policy.standardizer)
            results, gammas = decode_with_policy(model, sources, policy, featurizer, decoding, config['batch'])
            current_app.logger.info("Gammas escolhidos pela política: %s", sorted(set(gammas)))
        else:
            results = batch_decode(model, sources, decoding, config['batch'])
        write_nbest(results, model.vocab, config['out'])
    failures = sum(1 for nbest in results if nbest.failed)
    click.echo(f"{len(results)} origens decodificadas, {failures} falhas; N-best em {config['out']}")


@decode_bp.cli.command('oracle-check')
@click.option('--models', type=int, help='Modelos aleatórios no oráculo exaustivo.')
@click.option('--vocab', type=int, help='|V| (com EOS) dos modelos do oráculo.')
@click.option('--maxlen', type=int, help='max_len do oráculo exaustivo.')
@click.option('--gamma-models', type=int, help='Modelos aleatórios na suíte gamma=0.')
@run_options
@click.pass_context
def oracle_check_command(ctx, config_path, seed, **params):
    """Compara o decodificador com o argmax exaustivo e o caminho padrão."""
    config = start_run(ctx, 'oracle-check', params, config_path, seed)
    with handled_errors():
        reports = run_oracle_check(config['models'], config['vocab'], config['maxlen'],
                                   config['gamma_models'], seed=config.seed,
                                   cap=current_app.config['ENUMERATION_CAP'])
    for report in reports:
        click.echo(f"{report.name}: {report.summary()}")
    if not all(report.ok for report in reports):
        fail("Erro: o decodificador divergiu dos oráculos.", EXIT_FAILURE)
