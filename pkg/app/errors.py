# ./app/errors.py
# Hierarquia de exceções do decodificador. As operações centrais lançam;
# os serviços de pipeline convertem em tuplas (resultado, erro).


class DiverseDecodingError(Exception):
    """Raiz de todos os erros do projeto."""


class InputError(DiverseDecodingError, ValueError):
    """Entrada inválida: token fora do vocabulário, dimensão errada, corpus vazio."""


class ParseError(InputError):
    """Linha malformada em arquivo de entrada."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"linha {line_number}: {message}"
        super().__init__(message)


class StateError(DiverseDecodingError):
    """Estado de busca inconsistente (EOS no prefixo, hipótese finalizada expandida)."""


class ParameterError(DiverseDecodingError, ValueError):
    """Parâmetro fora do domínio (gamma < 0, max_len = 0, ...)."""


class TrainingError(DiverseDecodingError):
    """Falha ao treinar um modelo (corpus vazio)."""


class ConfigError(DiverseDecodingError):
    """Configuração inválida: chaves desconhecidas, tabela idf ausente, etc."""


class RefusalError(DiverseDecodingError):
    """Enumeração exaustiva recusada por exceder o limite configurado."""
