"""Família de exceções do Amalgam.

Cada erro herda também da exceção nativa equivalente, então quem chama pode
capturar tanto `DimensionError` quanto `ValueError`.
"""

from typing import Any, List, Optional


class AmalgamError(Exception):
    """Base de todos os erros do framework"""


class DimensionError(AmalgamError, ValueError):
    """Dimensões incompatíveis entre tensores, datasets ou segredos"""


class ArgumentError(AmalgamError, ValueError):
    """Argumento fora do domínio permitido (alpha negativo, conjunto vazio, etc.)"""


class OutOfRangeError(AmalgamError, IndexError):
    """Índice fora do intervalo (linha/coluna, token fora do vocabulário)"""


class ModelLoadError(AmalgamError, ValueError):
    """Falha ao carregar arquivos do modelo; `location` aponta o arquivo/campo"""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ExtractionError(AmalgamError):
    """Mapa de camadas do SecretBundle não corresponde ao modelo"""


class TrainingAbortedError(AmalgamError, RuntimeError):
    """Treino abortado (NaN/Inf na perda); guarda época e passo"""

    def __init__(self, message: str, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(f"{message} (época {epoch}, passo {step})")


class AttackAbortedError(AmalgamError, RuntimeError):
    """Objetivo do ataque virou NaN; guarda o histórico até o momento"""

    def __init__(self, message: str, history: List[float]):
        self.history = list(history)
        super().__init__(message)


class LabelAmbiguityError(AmalgamError, ValueError):
    """Gradiente do bias sem componente negativa (p_y == 1)"""


class InternalError(AmalgamError, RuntimeError):
    """Violação de invariante interna"""

    def __init__(self, message: str, context: Any = None):
        self.context = context
        super().__init__(message)
