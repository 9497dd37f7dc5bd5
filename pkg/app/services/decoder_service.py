# ./app/services/decoder_service.py
# Busca em feixe com seleção padrão e seleção penalizada por irmãos,
# coleta de EOS com reposição do feixe, decodificação em lote e oráculo exaustivo.
# A expansão e a seleção trabalham sobre matrizes numpy; só as hipóteses que
# entram no feixe ou na N-best viram objetos.

import json
import logging

import numpy as np
from joblib import Parallel, delayed

from app.errors import DiverseDecodingError, InputError, ParameterError, RefusalError, StateError
from app.models.hypothesis import Candidate, Hypothesis, NBestList

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10 ** 6

# Marca no rank_trace de um EOS forçado em max_len
FORCED_EOS_RANK = 0


def top_k_rows(logprobs, k):
    """
    Para cada linha, os k tokens de maior log-prob (desempate: menor id), já em
    ordem de rank. Devolve (linhas, tokens, log-probs, ranks); tokens com
    probabilidade zero (-inf) nunca são candidatos.
    """
    logprobs = np.atleast_2d(logprobs)
    size = logprobs.shape[1]
    mask = np.isfinite(logprobs)
    if k < size:
        kth = np.partition(logprobs, size - k, axis=1)[:, size - k]
        mask &= logprobs >= kth[:, None]
    rows, tokens = np.nonzero(mask)
    values = logprobs[rows, tokens]
    order = np.lexsort((tokens, -values, rows))
    rows, tokens, values = rows[order], tokens[order], values[order]
    ranks = np.arange(1, len(rows) + 1) - np.searchsorted(rows, rows)
    keep = ranks <= k
    return rows[keep], tokens[keep], values[keep], ranks[keep]


def _children(beam, model, source, beam_size):
    """(pais, ranks, tokens, escores) de todos os filhos, na ordem pai, rank."""
    logprobs = model.next_logprobs_batch(source, [hyp.tokens for hyp in beam])
    parents, tokens, values, ranks = top_k_rows(logprobs, beam_size)
    scores = np.array([hyp.score for hyp in beam])[parents] + values
    return parents, ranks, tokens, scores


def _child(parent, token, score, rank, eos_id):
    token = int(token)
    return Hypothesis(
        tokens=parent.tokens + (token,),
        score=float(score),
        finished=token == eos_id,
        rank_trace=parent.rank_trace + (int(rank),),
    )


def expand(beam, model, source, beam_size, gamma=0.0):
    """Para cada pai, os min(K, |V|) melhores filhos com k' = 1..; S do filho = S do pai + log p."""
    if not beam:
        raise InputError("Erro: feixe vazio na expansão.")
    if any(hyp.finished for hyp in beam):
        raise StateError("Erro: hipótese finalizada no feixe.")
    parents, ranks, tokens, scores = _children(beam, model, tuple(source), beam_size)
    candidates = []
    rows = zip(parents.tolist(), ranks.tolist(), tokens.tolist(), scores.tolist())
    for parent_index, rank, token, score in rows:
        candidates.append(Candidate(
            parent_index=parent_index,
            rank=rank,
            token=token,
            score=score,
            penalized=score - gamma * rank,
            parent=beam[parent_index],
        ))
    return candidates


def selection_order(scores, ranks, tokens, parents, beam_size, gamma=None):
    """
    Índices dos K melhores candidatos. Chave: S (gamma None) ou S - gamma * k';
    desempate: menor token, depois menor índice do pai.
    """
    key = scores if gamma is None else scores - gamma * ranks
    return np.lexsort((parents, tokens, -key))[:beam_size]


def _select(candidates, beam_size, gamma, eos_id):
    scores = np.array([c.score for c in candidates], dtype=float)
    ranks = np.array([c.rank for c in candidates], dtype=np.int64)
    tokens = np.array([c.token for c in candidates], dtype=np.int64)
    parents = np.array([c.parent_index for c in candidates], dtype=np.int64)
    chosen = selection_order(scores, ranks, tokens, parents, beam_size, gamma)
    return [candidates[i].to_hypothesis(eos_id) for i in chosen]


def select_vanilla(candidates, beam_size, eos_id=None):
    """Os K melhores por S (desempate: menor token, depois menor índice do pai)."""
    return _select(candidates, beam_size, None, eos_id)


def select_diverse(candidates, beam_size, gamma, eos_id=None):
    """
    Os K melhores por S - gamma * k'. As hipóteses mantêm o S sem penalidade:
    a penalidade só decide a seleção deste passo.
    """
    if gamma < 0:
        raise ParameterError(f"Erro: gamma deve ser >= 0 (recebido {gamma}).")
    return _select(candidates, beam_size, gamma, eos_id)


def decode(model, source, params):
    """
    Laço t = 1..max_len: expande, coleta todo candidato EOS com corpo >= min_len
    para a N-best (EOS não ocupa vaga no feixe), e repõe o feixe com os K melhores
    candidatos não finalizados. Em max_len os sobreviventes recebem EOS forçado.
    """
    source = tuple(source)
    min_len, max_len = params.length_bounds(len(source))
    eos_id = model.eos_id
    k = params.beam_size
    gamma = params.gamma if params.use_diverse else None

    beam = [Hypothesis(tokens=(), score=0.0)]
    finished = []
    for t in range(1, max_len + 1):
        parents, ranks, tokens, scores = _children(beam, model, source, k)
        is_eos = tokens == eos_id
        # EOS no passo t fecha um corpo de t-1 tokens
        if t - 1 >= min_len:
            for i in np.flatnonzero(is_eos):
                finished.append(_child(beam[parents[i]], tokens[i], scores[i], ranks[i], eos_id))
        live = np.flatnonzero(~is_eos)
        if not live.size:
            beam = []
            break
        chosen = live[selection_order(scores[live], ranks[live], tokens[live], parents[live], k, gamma)]
        beam = [_child(beam[parents[i]], tokens[i], scores[i], ranks[i], eos_id) for i in chosen]

    if beam:
        eos_logprobs = model.next_logprobs_batch(source, [hyp.tokens for hyp in beam])[:, eos_id]
        for hyp, eos_logprob in zip(beam, eos_logprobs.tolist()):
            if np.isfinite(eos_logprob):
                finished.append(Hypothesis(
                    tokens=hyp.tokens + (eos_id,),
                    score=hyp.score + eos_logprob,
                    finished=True,
                    rank_trace=hyp.rank_trace + (FORCED_EOS_RANK,),
                ))

    nbest = NBestList.from_hypotheses(finished, cap=params.nbest_limit)
    if nbest.failed:
        nbest.error = f"Erro: nenhuma hipótese finalizada com min_len={min_len}, max_len={max_len}."
        logger.warning("Falha de decodificação (|X|=%d): %s", len(source), nbest.error)
    return nbest


def _decode_safely(model, source, params):
    try:
        return decode(model, source, params)
    except DiverseDecodingError as e:
        return NBestList(entries=[], error=str(e))


def batch_decode(model, sources, params, parallelism=1):
    """
    Decodifica cada origem de forma independente; paralelismo apenas entre
    origens. A saída é idêntica para qualquer parallelism e mantém a ordem.
    """
    if parallelism < 1:
        raise ParameterError(f"Erro: parallelism deve ser >= 1 (recebido {parallelism}).")
    sources = [tuple(s) for s in sources]
    if not sources:
        return []
    if parallelism == 1:
        results = [_decode_safely(model, s, params) for s in sources]
    else:
        results = Parallel(n_jobs=parallelism)(delayed(_decode_safely)(model, s, params) for s in sources)
    for index, nbest in enumerate(results):
        if nbest.error and not nbest.entries:
            logger.warning("Origem %d: %s", index, nbest.error)
    return list(results)


def count_terminated_sequences(vocab_size, min_len, max_len):
    body_symbols = vocab_size - 1
    return sum(body_symbols ** length for length in range(min_len, max_len + 1))


def exhaustive_argmax(model, source, max_len, min_len=1, cap=DEFAULT_ENUMERATION_CAP):
    """
    Enumera todas as sequências terminadas em EOS com min_len <= corpo <= max_len
    e devolve (sequência, log-prob) máxima; empate: menor sequência de ids.
    """
    if max_len < 1:
        raise ParameterError(f"Erro: max_len deve ser >= 1 (recebido {max_len}).")
    if min_len < 0 or min_len > max_len:
        raise ParameterError(f"Erro: min_len={min_len} inválido para max_len={max_len}.")
    total = count_terminated_sequences(model.vocab.size, min_len, max_len)
    if total > cap:
        raise RefusalError(f"Erro: enumeração de {total} sequências excede o limite {cap}.")

    source = tuple(source)
    eos_id = model.eos_id
    body_tokens = [tok for tok in range(model.vocab.size) if tok != eos_id]
    best = [None, None]

    def consider(sequence, score):
        best_seq, best_score = best
        if best_seq is None or score > best_score or (score == best_score and sequence < best_seq):
            best[0], best[1] = sequence, score

    def visit(prefix, score):
        logprobs = model.next_logprobs(source, prefix)
        if len(prefix) >= min_len:
            consider(prefix + (eos_id,), score + float(logprobs[eos_id]))
        if len(prefix) < max_len:
            for token in body_tokens:
                visit(prefix + (token,), score + float(logprobs[token]))

    visit((), 0.0)
    return best[0], best[1]


def nbest_records(results, vocab):
    """Registros N-best na ordem de campos fixa."""
    for source_index, nbest in enumerate(results):
        for rank, hyp in enumerate(nbest.entries, start=1):
            yield {
                'source_index': source_index,
                'rank': rank,
                'text': vocab.detokenize(hyp.tokens),
                'ids': list(hyp.tokens),
                'score': hyp.score,
            }


def write_nbest(results, vocab, path):
    with open(path, 'w', encoding='utf-8') as fh:
        for record in nbest_records(results, vocab):
            fh.write(json.dumps(record, ensure_ascii=False) + '\n')


def read_nbest(path, num_sources=None):
    """Lê um arquivo N-best; origens sem registros viram listas vazias (falha)."""
    grouped = {}
    with open(path, encoding='utf-8') as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                index = int(record['source_index'])
                hyp = Hypothesis(tokens=tuple(record['ids']), score=float(record['score']), finished=True)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise InputError(f"Erro: registro N-best inválido na linha {line_number}: {e}") from e
            grouped.setdefault(index, []).append((int(record['rank']), hyp))
    size = num_sources if num_sources is not None else (max(grouped) + 1 if grouped else 0)
    results = []
    for index in range(size):
        entries = [hyp for _, hyp in sorted(grouped.get(index, []), key=lambda item: item[0])]
        results.append(NBestList(entries=entries))
    return results
