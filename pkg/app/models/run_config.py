# ./app/models/run_config.py
# Configuração resolvida de uma execução da CLI.

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RunConfig:
    """
    Parâmetros de um subcomando já validados.
    Toda aleatoriedade da execução deriva de 'seed'.
    """
    command: str
    values: dict = field(default_factory=dict)
    seed: int = 0

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __repr__(self):
        return f"<RunConfig {self.command} seed={self.seed}>"

    def to_dict(self):
        return {
            'command': self.command,
            'seed': self.seed,
            'values': {k: self.values[k] for k in sorted(self.values)},
        }
