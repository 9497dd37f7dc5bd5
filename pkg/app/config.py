# ./app/config.py
# Valores padrão (escala de bancada) por subcomando e resolução da configuração:
# DEFAULTS < arquivo --config (JSON) < flags explícitas.

import json
import logging

from app.errors import ConfigError
from app.models.policy import GammaGrid
from app.models.run_config import RunConfig

logger = logging.getLogger(__name__)

DEFAULT_SEED = 13

# Grade de gamma: 21 valores em [0, 1] espaçados de 0.05
DEFAULT_GAMMA_GRID = GammaGrid.regular().values

_DECODE_KEYS = {
    'beam': 10,
    'gamma': 0.0,
    'min_ratio': 0.75,
    'max_ratio': 1.5,
    'min_len': None,
    'max_len': None,
    'nbest': None,
    'batch': 1,
    'selection': 'auto',
}

_MERT_KEYS = {
    'restarts': 8,
    'max_iters': 10,
}

DEFAULTS = {
    'train-model': {
        'corpus': None, 'format': 'tsv', 'lowercase': False,
        'order': 3, 'lam': 0.5, 'alpha': 0.1, 'backward': False, 'out': None,
    },
    'train-lm': {
        'corpus': None, 'format': 'tsv', 'lowercase': False,
        'side': 'target', 'order': 3, 'alpha': 0.1, 'out': None,
    },
    'idf': {
        'documents': None, 'lowercase': False, 'out': None,
    },
    'decode': {
        'model': None, 'corpus': None, 'format': 'tsv', 'lowercase': False,
        'policy': None, 'src_lm': None, 'out': None, **_DECODE_KEYS,
    },
    'rerank': {
        'nbest': None, 'corpus': None, 'format': 'tsv', 'lowercase': False,
        'fwd': None, 'bwd': None, 'lm': None, 'idf': None, 'weights': None,
        'out': None, 'output': None,
    },
    'tune-weights': {
        'nbest': None, 'corpus': None, 'format': 'tsv', 'lowercase': False,
        'fwd': None, 'bwd': None, 'lm': None, 'idf': None, 'out': None, **_MERT_KEYS,
    },
    'train-policy': {
        'train': None, 'dev': None, 'format': 'tsv', 'lowercase': False,
        'fwd': None, 'bwd': None, 'lm': None, 'src_lm': None, 'idf': None,
        'grid': list(DEFAULT_GAMMA_GRID), 'num_instances': 1000, 'retune_every': 10000,
        'lr_policy': 0.1, 'lr_baseline': 0.01, 'rerank': False,
        'out': None, 'log': None, **_DECODE_KEYS, **_MERT_KEYS,
    },
    'sweep-gamma': {
        'corpus': None, 'format': 'tsv', 'lowercase': False,
        'fwd': None, 'bwd': None, 'lm': None, 'idf': None, 'weights': None,
        'grid': list(DEFAULT_GAMMA_GRID), 'rerank': False, **_DECODE_KEYS,
    },
    'eval': {
        'metric': None, 'hyp': None, 'ref': None,
    },
    'oracle-check': {
        'models': 50, 'vocab': 5, 'maxlen': 5, 'gamma_models': 200,
    },
    'bucket': {
        'corpus': None, 'format': 'tsv', 'lowercase': False, 'bucket': 'natural', 'out': None,
    },
}


# Chaves de decodificação opcionais (None = derivado) que, quando informadas, são inteiras
_OPTIONAL_INT_KEYS = ('min_len', 'max_len', 'nbest')


def expected_type(command, key):
    """Tipo aceito para uma chave: o do valor padrão; padrões None são caminhos (str)."""
    default = DEFAULTS[command][key]
    if default is not None:
        return type(default)
    if key in _OPTIONAL_INT_KEYS and 'beam' in DEFAULTS[command]:
        return int
    return str


def check_value(command, key, value):
    """Valida o tipo de um valor vindo do arquivo de configuração; inteiros valem como reais."""
    if value is None:
        return None
    expected = expected_type(command, key)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is list and isinstance(value, str):
        return value
    if isinstance(value, expected) and not (expected is int and isinstance(value, bool)):
        return value
    raise ConfigError(
        f"Erro: valor inválido para '{key}' em '{command}': {value!r} (esperado {expected.__name__})."
    )


def load_config_file(path):
    """Lê um arquivo JSON de configuração (mesmas chaves das flags)."""
    if not path:
        return {}
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Erro: arquivo de configuração ilegível '{path}': {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("Erro: o arquivo de configuração deve conter um objeto JSON.")
    return data


def resolve_run_config(command, flags, config_path=None, seed=None):
    """Mescla DEFAULTS, arquivo de configuração e flags (as flags vencem)."""
    if command not in DEFAULTS:
        raise ConfigError(f"Erro: subcomando desconhecido '{command}'.")
    allowed = DEFAULTS[command]
    from_file = load_config_file(config_path)

    unknown = sorted((set(from_file) - set(allowed) - {'seed'}) |
                     {k for k in flags if k not in allowed})
    if unknown:
        raise ConfigError(f"Erro: chaves de configuração desconhecidas para '{command}': {', '.join(unknown)}")

    values = dict(allowed)
    values.update({k: check_value(command, k, v) for k, v in from_file.items() if k != 'seed'})
    values.update({k: v for k, v in flags.items() if v is not None})

    if seed is None:
        seed = from_file.get('seed', DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"Erro: a semente deve ser inteira (recebido {seed!r}).")
    return RunConfig(command=command, values=values, seed=seed)


def require(config, *keys):
    """Garante que as chaves obrigatórias (caminhos) foram informadas."""
    missing = [k for k in keys if config.values.get(k) in (None, '')]
    if missing:
        raise ConfigError(f"Erro: parâmetros obrigatórios ausentes: {', '.join(missing)}")
