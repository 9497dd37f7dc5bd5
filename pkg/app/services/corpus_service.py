# ./app/services/corpus_service.py
# Leitura e escrita de corpora paralelos (TSV ou JSON-lines) e filtros por tamanho.

import json
import logging

from app.errors import DiverseDecodingError, InputError, ParseError
from app.models.corpus import ParallelCorpus, SentencePair

logger = logging.getLogger(__name__)

FORMATS = ('tsv', 'jsonl')

# Faixas de tamanho da referência: 'short' <= 6 tokens, 'long' > 16 tokens
SHORT_MAX = 6
LONG_MIN = 17
BUCKETS = ('natural', 'short', 'long')


def tokenize(text, lowercase=False):
    """Tokenização determinística por espaço em branco."""
    if lowercase:
        text = text.lower()
    return tuple(text.split())


def _parse_tsv_line(line, line_number, lowercase):
    fields = line.rstrip('\n').split('\t')
    if len(fields) != 2:
        raise ParseError(f"esperados 2 campos separados por tab, encontrados {len(fields)}", line_number)
    source, target = (tokenize(f, lowercase) for f in fields)
    if not source or not target:
        raise ParseError("lado vazio após tokenização", line_number)
    return SentencePair(source, target)


def _parse_jsonl_line(line, line_number, lowercase):
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON inválido: {e}", line_number) from e
    if not isinstance(record, dict) or not isinstance(record.get('source'), str) \
            or not isinstance(record.get('target'), str):
        raise ParseError("registro sem campos de texto 'source'/'target'", line_number)
    source = tokenize(record['source'], lowercase)
    target = tokenize(record['target'], lowercase)
    if not source or not target:
        raise ParseError("lado vazio após tokenização", line_number)
    return SentencePair(source, target, record.get('split'))


def ingest(path, fmt='tsv', lowercase=False):
    """Lê um corpus paralelo: TSV (origem\\talvo) ou JSON-lines com 'source'/'target'."""
    if fmt not in FORMATS:
        raise InputError(f"Erro: formato desconhecido '{fmt}' (use tsv ou jsonl).")
    parse = _parse_tsv_line if fmt == 'tsv' else _parse_jsonl_line
    pairs = []
    with open(path, encoding='utf-8') as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            pairs.append(parse(line, line_number, lowercase))
    if not pairs:
        raise InputError(f"Erro: arquivo vazio '{path}'.")
    corpus = ParallelCorpus(pairs)
    logger.info("Corpus lido de %s: %d pares", path, len(corpus))
    return corpus


def persist(corpus, path, fmt='tsv'):
    """Escreve o corpus no formato pedido; ingest(persist(c)) reproduz c."""
    if fmt not in FORMATS:
        raise InputError(f"Erro: formato desconhecido '{fmt}' (use tsv ou jsonl).")
    with open(path, 'w', encoding='utf-8') as fh:
        for pair in corpus:
            if fmt == 'tsv':
                fh.write(f"{' '.join(pair.source)}\t{' '.join(pair.target)}\n")
            else:
                fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + '\n')


def length_bucket(corpus, bucket):
    """Filtra pelo tamanho da referência: natural (todos), short (<= 6) ou long (> 16)."""
    if bucket not in BUCKETS:
        raise InputError(f"Erro: faixa desconhecida '{bucket}' (use {', '.join(BUCKETS)}).")
    if bucket == 'natural':
        return ParallelCorpus(list(corpus.pairs))
    if bucket == 'short':
        return ParallelCorpus([p for p in corpus if len(p.target) <= SHORT_MAX])
    return ParallelCorpus([p for p in corpus if len(p.target) >= LONG_MIN])


def read_lines(path, lowercase=False):
    """Uma sequência tokenizada por linha (hipóteses, referências, documentos)."""
    with open(path, encoding='utf-8') as fh:
        return [tokenize(line, lowercase) for line in fh]


def ingest_service(path, fmt='tsv', lowercase=False):
    """Lê o corpus retornando (corpus, erro)."""
    try:
        return ingest(path, fmt, lowercase), None
    except DiverseDecodingError as e:
        logger.error("Falha ao ler corpus %s: %s", path, e)
        return None, f"Erro ao ler corpus '{path}': {e}"
    except OSError as e:
        return None, f"Erro: não foi possível abrir '{path}': {e}"
