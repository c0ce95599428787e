"""Deterministic rule-based sentence splitting."""

from __future__ import annotations

import re

from .clean import default_abbreviations

_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)")


def split_sentences(text: str, abbreviations=None) -> list:
    """Split after runs of '.', '!' or '?' that precede whitespace or the end.

    A lone '.' closing a listed abbreviation ("dr.", "e.g.") does not split.
    Terminal punctuation stays with its sentence.
    """
    abbrevs = set(default_abbreviations() if abbreviations is None else (a.lower() for a in abbreviations))
    out, start = [], 0
    for m in _BOUNDARY.finditer(text):
        if m.group() == ".":
            word = text[start : m.start()].split()
            word = word[-1].lstrip("([{\"'").lower() if word else ""
            if word in abbrevs:
                continue
        piece = text[start : m.end()].strip()
        if piece:
            out.append(piece)
        start = m.end()
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out
