"""Fine-tuning hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FinetuneConfig:
    """Defaults are the tuned operating point; override per run.

    ``max_sequence_length`` counts sub-tokens including the special markers
    the tokenizer adds.
    """

    model: str
    max_sequence_length: int = 200
    batch_size: int = 32
    learning_rate: float = 3e-5
    epochs: int = 7

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model identifier must be non-empty")
        if self.max_sequence_length < 3:
            raise ValueError(
                "max_sequence_length must fit a token between the special markers"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
