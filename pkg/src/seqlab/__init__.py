"""Clinical concept extraction toolkit.

Pipeline: ingest i2b2-style annotations to CoNLL, tighten entity boundaries
with the stopword-aware relabeler, train a char-CNN + BiLSTM + CRF tagger
on per-token word vectors, combine seed ensembles by majority vote, and
score entities by exact span match.
"""

from .corpus import (
    EntitySpan,
    ParseError,
    Sentence,
    TaggedCorpus,
    corpus_stats,
    iob_tags,
    iob_to_spans,
    parse_conll,
    parse_i2b2,
    spans_to_iob,
    validate_iob,
    write_conll,
)
from .ensemble import majority_vote, repair_iob
from .evaluation import entity_prf, format_report, report_json, token_accuracy
from .features import (
    EmbeddingFileProvider,
    HashEmbeddingProvider,
    LookupEmbeddingProvider,
    assemble_features,
    encode_chars,
    hash_embedding,
    load_embedding_file,
    parse_embedding_file,
    write_embedding_file,
    writing_format,
)
from .relabel import (
    RelabelConfig,
    build_relabel_config,
    default_relabel_config,
    relabel_corpus,
    relabel_sentence,
)
from .tagger import (
    ModelBundle,
    ModelConfig,
    TrainReport,
    init_model,
    load_model,
    predict,
    predict_corpus,
    read_model,
    save_model,
    train,
    write_model,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
