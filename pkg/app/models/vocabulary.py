# ./app/models/vocabulary.py
# Vocabulário fechado com EOS reservado e utilitários de sequência de ids.

from dataclasses import dataclass
from typing import Tuple

from app.errors import InputError, StateError

EOS_SURFACE = '</s>'
UNK_SURFACE = '<unk>'

# Uma sequência é uma tupla imutável de ids de token
Sequence = Tuple[int, ...]


@dataclass(frozen=True)
class Vocabulary:
    """
    Ids densos 0..size-1, superfícies únicas, eos_id reservado.
    unk_id é opcional (vocabulários construídos a partir de corpus o têm).
    """
    tokens: Tuple[str, ...]
    eos_id: int
    unk_id: int = None

    def __post_init__(self):
        object.__setattr__(self, 'tokens', tuple(self.tokens))
        if len(set(self.tokens)) != len(self.tokens):
            raise InputError("Erro: superfícies de token duplicadas no vocabulário.")
        if not 0 <= self.eos_id < len(self.tokens):
            raise InputError(f"Erro: eos_id {self.eos_id} fora do vocabulário de tamanho {len(self.tokens)}.")
        if self.unk_id is not None and not 0 <= self.unk_id < len(self.tokens):
            raise InputError(f"Erro: unk_id {self.unk_id} fora do vocabulário.")
        object.__setattr__(self, '_index', {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def size(self):
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __repr__(self):
        return f"<Vocabulary size={self.size} eos={self.eos_id}>"

    @classmethod
    def from_sentences(cls, sentences, with_unk=True):
        """Constrói o vocabulário na ordem da primeira ocorrência; EOS (e <unk>) ao final."""
        tokens = []
        seen = set()
        for sentence in sentences:
            for word in sentence:
                if word == EOS_SURFACE:
                    raise InputError(f"Erro: o corpus contém o símbolo reservado '{EOS_SURFACE}'.")
                if word not in seen:
                    seen.add(word)
                    tokens.append(word)
        unk_id = None
        if with_unk and UNK_SURFACE not in seen:
            unk_id = len(tokens)
            tokens.append(UNK_SURFACE)
        elif with_unk:
            unk_id = tokens.index(UNK_SURFACE)
        tokens.append(EOS_SURFACE)
        return cls(tokens=tuple(tokens), eos_id=len(tokens) - 1, unk_id=unk_id)

    def index(self, word):
        return self._index.get(word)

    def encode(self, words):
        """Converte palavras em ids; sem <unk>, palavra desconhecida é erro de entrada."""
        ids = []
        for word in words:
            idx = self._index.get(word)
            if idx is None or idx == self.eos_id:
                if self.unk_id is None:
                    raise InputError(f"Erro: palavra fora do vocabulário: '{word}'.")
                idx = self.unk_id
            ids.append(idx)
        return tuple(ids)

    def decode(self, ids, strip_eos=True):
        """Converte ids em palavras (EOS final removido por padrão)."""
        ids = strip_trailing_eos(ids, self.eos_id) if strip_eos else tuple(ids)
        return [self.tokens[i] for i in ids]

    def detokenize(self, ids):
        return ' '.join(self.decode(ids))

    def validate(self, ids):
        """Verifica ids válidos e EOS somente como último elemento."""
        for pos, token in enumerate(ids):
            if not isinstance(token, (int,)) and not hasattr(token, '__index__'):
                raise InputError(f"Erro: id de token inválido: {token!r}.")
            if not 0 <= token < self.size:
                raise InputError(f"Erro: id de token {token} fora do vocabulário de tamanho {self.size}.")
            if token == self.eos_id and pos != len(ids) - 1:
                raise StateError("Erro: EOS só pode aparecer como último elemento da sequência.")

    def to_dict(self):
        return {
            'tokens': list(self.tokens),
            'eos_id': self.eos_id,
            'unk_id': self.unk_id,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tokens=tuple(data['tokens']), eos_id=int(data['eos_id']),
                   unk_id=data.get('unk_id'))


def strip_trailing_eos(ids, eos_id):
    """Remove o EOS final, se houver."""
    ids = tuple(ids)
    if ids and ids[-1] == eos_id:
        return ids[:-1]
    return ids
