from .clean import Lemmatizer, clean_stage1, clean_stage2, default_abbreviations, default_stopwords, read_wordlist, read_exceptions
from .embeddings import EmbeddingTable, load_embeddings
from .records import (LABELS, DataError, Preprocessor, RawRecord, TokenizedDoc, Vocabulary, build_vocab,
                      parse_label, read_jsonl, stack, vectorize, vectorize_sentences)
from .sentences import split_sentences

__all__ = [
    "LABELS", "DataError", "EmbeddingTable", "Lemmatizer", "Preprocessor", "RawRecord", "TokenizedDoc",
    "Vocabulary", "build_vocab", "clean_stage1", "clean_stage2", "default_abbreviations",
    "default_stopwords", "load_embeddings", "parse_label", "read_exceptions", "read_jsonl",
    "read_wordlist", "split_sentences", "stack", "vectorize", "vectorize_sentences",
]
