"""Transformer fine-tuning and per-token hidden-state embedding export."""

from .config import FinetuneConfig
from .conll import ConllError, ConllSentence, load_conll, read_conll, tag_inventory
from .export import ExportError, export_embeddings, sentence_vectors, write_embeddings
from .finetune import (
    CheckpointError,
    FinetuneResult,
    encode_batch,
    finetune,
    load_for_export,
    save_checkpoint,
)

__all__ = [
    "CheckpointError",
    "ConllError",
    "ConllSentence",
    "ExportError",
    "FinetuneConfig",
    "FinetuneResult",
    "encode_batch",
    "export_embeddings",
    "finetune",
    "load_conll",
    "load_for_export",
    "read_conll",
    "save_checkpoint",
    "sentence_vectors",
    "tag_inventory",
    "write_embeddings",
]
