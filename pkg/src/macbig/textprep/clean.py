"""Two-stage tweet cleaning: surface noise first, then word normalization."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

from nltk.stem.porter import PorterStemmer

_URL = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_RT_HEADER = re.compile(r"^\s*rt\s+@[A-Za-z0-9_]+:?", re.IGNORECASE)
_MENTION = re.compile(r"@[A-Za-z0-9_]+")
_NON_ASCII = re.compile(r"[^\x00-\x7f]")
# "nan" counts as a token only between non-alphanumeric, non-'#' characters,
# matching what symbol stripping would later turn into token boundaries
_NAN = re.compile(r"(?<![A-Za-z0-9#])nan(?![A-Za-z0-9#])", re.IGNORECASE)
_SYMBOL = re.compile(r"[^A-Za-z0-9#\s]")
_SPACE = re.compile(r"\s+")


def clean_stage1(text: str) -> str:
    """Strip URLs, retweet headers, mentions, non-ASCII, "nan" and symbols; lowercase."""
    text = _URL.sub(" ", text)
    text = _RT_HEADER.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = _NON_ASCII.sub("", text)
    text = _NAN.sub(" ", text)
    text = _SYMBOL.sub(" ", text)
    return _SPACE.sub(" ", text).strip().lower()


def read_wordlist(source) -> list:
    """One entry per line; blank lines and '#' comments skipped."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line.lower())
    return out


def _data(name: str):
    return resources.files("macbig.textprep").joinpath("data", name)


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset:
    return frozenset(read_wordlist(_data("stopwords.txt").open(encoding="utf-8")))


@lru_cache(maxsize=None)
def default_abbreviations() -> tuple:
    return tuple(read_wordlist(_data("abbreviations.txt").open(encoding="utf-8")))


def read_exceptions(source) -> dict:
    """Lemma exception table: ``inflected lemma`` per line."""
    table = {}
    for line in read_wordlist(source):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"lemma exception line needs two words: {line!r}")
        table[parts[0]] = parts[1]
    return table


_VOWEL = re.compile(r"[aeiou]")
_SHORT_CVC = re.compile(r"^[^aeiou]*[aeiou][^aeiouwxy]$")


class Lemmatizer:
    """Regular inflection rules behind an exception table.

    Irregular forms come from the table; otherwise plural nouns and -ing/-ed
    verb forms are reduced by suffix rules (doubled final consonants are
    undoubled, and a short consonant-vowel-consonant stem regains its 'e').
    """

    def __init__(self, exceptions: dict | None = None):
        self.exceptions = dict(default_exceptions() if exceptions is None else exceptions)

    def __call__(self, word: str) -> str:
        if word in self.exceptions:
            return self.exceptions[word]
        if len(word) < 4 or not word.isalpha():
            return word
        if word.endswith("ies") and len(word) > 4:
            return word[:-3] + "y"
        if word.endswith("sses"):
            return word[:-2]
        if word.endswith(("ches", "shes", "xes", "zes")):
            return word[:-2]
        if word.endswith("s") and not word.endswith(("ss", "us", "is")):
            return word[:-1]
        for suffix in ("ing", "ed"):
            if word.endswith(suffix):
                stem = word[: -len(suffix)]
                if len(stem) < 3 or not _VOWEL.search(stem):
                    return word
                if stem[-1] == stem[-2] and stem[-1] not in "aeioulsz":
                    return stem[:-1]
                if _SHORT_CVC.match(stem):
                    return stem + "e"
                return stem
        return word


@lru_cache(maxsize=None)
def default_exceptions() -> dict:
    return read_exceptions(_data("lemma_exceptions.txt").open(encoding="utf-8"))


_STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
_NOT_ALNUM = re.compile(r"[^a-z0-9]")


def clean_stage2(tokens, stopwords=None, lemmatizer: Lemmatizer | None = None) -> list:
    """Stop words, hashtags, punctuation, lemmatization, Porter stemming, in that order."""
    stopwords = default_stopwords() if stopwords is None else stopwords
    lemmatizer = lemmatizer if lemmatizer is not None else _default_lemmatizer()
    out = []
    for tok in tokens:
        if tok in stopwords or tok.startswith("#"):
            continue
        tok = _NOT_ALNUM.sub("", tok.lower())
        if not tok:
            continue
        tok = _STEMMER.stem(lemmatizer(tok))
        if tok:
            out.append(tok)
    return out


@lru_cache(maxsize=None)
def _default_lemmatizer() -> Lemmatizer:
    return Lemmatizer()
