"""Excepções do domínio.

Convenção: as funções da biblioteca levantam; só a camada CLI
(`app.ASLGroup`) converte excepções em mensagens e exit codes.

    ConfigError             → exit 1 (uso / configuração inválida)
    DataError, FormatError  → exit 2 (dataset ou ficheiro inválido)
    NumericsError,
    TrainingDivergedError,
    GradCheckFailure        → exit 3 (falha numérica)
"""

from __future__ import annotations


class ASLError(Exception):
    """Base de todas as excepções do toolkit."""

    exit_code = 3


class ConfigError(ASLError):
    """Configuração inválida (chave desconhecida, tipo ou intervalo errado)."""

    exit_code = 1


class DataError(ASLError):
    """Dataset, anotação ou vídeo inválido."""

    exit_code = 2


class FormatError(DataError):
    """Ficheiro corrompido ou com formato inesperado.

    `offset` é a posição (em bytes) onde o problema foi detectado.
    """

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class NumericsError(ASLError):
    """Entrada não-finita, dimensões incompatíveis ou valor fora do domínio."""


class TrainingDivergedError(NumericsError):
    """Loss não-finita durante o treino."""

    def __init__(self, batch_id: int, component: str = "total") -> None:
        super().__init__(
            f"Treino divergiu no batch {batch_id} (componente {component} não-finita)"
        )
        self.batch_id = batch_id
        self.component = component


class GradCheckFailure(NumericsError):
    """Gradientes analíticos e numéricos não concordam."""


class NonFiniteLossError(NumericsError):
    """Uma componente da loss deu NaN/inf; `component` identifica qual."""

    def __init__(self, component: str) -> None:
        super().__init__(f"componente {component} não-finita")
        self.component = component
