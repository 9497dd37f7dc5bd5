# ./app/controllers/cli_support.py
# Utilitários compartilhados pelos comandos: opções --config/--seed, resolução
# e eco da configuração, leitura de corpus e saída com status de erro.

import json
from contextlib import contextmanager

import click
from click.core import ParameterSource
from flask import current_app

from app.config import resolve_run_config
from app.errors import ConfigError, DiverseDecodingError, InputError, ParameterError
from app.models.hypothesis import DecodeParams
from app.models.policy import GammaGrid
from app.services.corpus_service import ingest_service

# Status de saída: 1 = falha na execução, 2 = configuração ou entrada inválida
EXIT_FAILURE = 1
EXIT_INVALID = 2

FORMAT_CHOICE = click.Choice(['tsv', 'jsonl'])


def run_options(func):
    """--config e --seed, aceitos por todos os subcomandos."""
    func = click.option('--seed', type=int, help='Semente única da execução.')(func)
    func = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                        help='Arquivo JSON com as mesmas chaves das flags.')(func)
    return func


def corpus_options(func):
    func = click.option('--lowercase/--no-lowercase', help='Converte o texto para minúsculas.')(func)
    func = click.option('--format', type=FORMAT_CHOICE, help='Formato do corpus (tsv ou jsonl).')(func)
    return func


def decode_options(func):
    func = click.option('--selection', type=click.Choice(['auto', 'vanilla', 'diverse']),
                        help='Caminho de seleção; auto usa o padrão quando gamma = 0.')(func)
    func = click.option('--batch', type=int, help='Processos de decodificação em paralelo.')(func)
    func = click.option('--nbest', type=int, help='Tamanho máximo da lista N-best (padrão: K).')(func)
    func = click.option('--max-len', type=int, help='Tamanho máximo do corpo (sobrepõe a razão).')(func)
    func = click.option('--min-len', type=int, help='Tamanho mínimo do corpo (sobrepõe a razão).')(func)
    func = click.option('--max-ratio', type=float, help='max_len = ceil(razão * |X|).')(func)
    func = click.option('--min-ratio', type=float, help='min_len = max(1, floor(razão * |X|)).')(func)
    func = click.option('--gamma', type=float, help='Taxa de diversidade.')(func)
    func = click.option('--beam', type=int, help='Tamanho do feixe K.')(func)
    return func


def fail(message, code=EXIT_FAILURE):
    """Reporta o erro e encerra o comando com status diferente de zero."""
    current_app.logger.error(message)
    click.echo(message, err=True)
    click.get_current_context().exit(code)


@contextmanager
def handled_errors():
    """Converte erros do domínio em status de saída."""
    try:
        yield
    except (ConfigError, InputError, ParameterError) as e:
        fail(str(e), EXIT_INVALID)
    except DiverseDecodingError as e:
        fail(str(e), EXIT_FAILURE)
    except OSError as e:
        fail(f"Erro de arquivo: {e}", EXIT_FAILURE)


def start_run(ctx, command, params, config_path=None, seed=None):
    """Resolve a configuração (só flags passadas explicitamente) e ecoa config e semente."""
    flags = {name: value for name, value in params.items()
             if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE}
    try:
        config = resolve_run_config(command, flags, config_path, seed)
    except ConfigError as e:
        fail(str(e), EXIT_INVALID)
    current_app.logger.info("Executando %s com %s", command, config.to_dict())
    click.echo(f"config: {json.dumps(config.to_dict()['values'], sort_keys=True)}")
    click.echo(f"seed: {config.seed}")
    return config


def fmt(value):
    """Números em relatórios: 4 casas decimais."""
    return f"{value:.4f}"


def decode_params(config):
    return DecodeParams(
        beam_size=config['beam'],
        gamma=config['gamma'],
        min_len=config['min_len'],
        max_len=config['max_len'],
        min_ratio=config['min_ratio'],
        max_ratio=config['max_ratio'],
        nbest_cap=config['nbest'],
        selection=config['selection'],
    )


def parse_grid(value):
    """Grade de gamma a partir de lista (arquivo de configuração) ou texto '0,0.5,1'."""
    if isinstance(value, str):
        try:
            value = [float(v) for v in value.split(',') if v.strip()]
        except ValueError as e:
            raise ConfigError(f"Erro: grade de gamma inválida '{value}'.") from e
    return GammaGrid(tuple(value))


def load_corpus(config, key='corpus'):
    corpus, error = ingest_service(config[key], config['format'], config['lowercase'])
    if error:
        fail(error, EXIT_INVALID)
    return corpus


def encode_pairs(corpus, source_vocab, target_vocab):
    """Pares de ids; palavras desconhecidas viram <unk> quando o vocabulário o tem."""
    return [(source_vocab.encode(p.source), target_vocab.encode(p.target)) for p in corpus]


def training_split(corpus):
    """Usa os pares marcados como 'train' quando há marcação; senão o corpus inteiro."""
    tagged = corpus.split('train')
    return tagged if len(tagged) else corpus
