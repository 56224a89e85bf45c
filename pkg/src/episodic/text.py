"""Case/diacritic folding and tokenization shared by matching and resolution."""

from __future__ import annotations

import re
import unicodedata

_WORD = re.compile(r"[^\W_]+(?:'[^\W_]+)?")


def fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch)).casefold()


def tokens(text: str | None) -> list[str]:
    if not text:
        return []
    return _WORD.findall(fold(text))


def contains_phrase(haystack: list[str], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    if n == 0 or n > len(haystack):
        return False
    first = phrase[0]
    for i, tok in enumerate(haystack[: len(haystack) - n + 1]):
        if tok == first and tuple(haystack[i : i + n]) == phrase:
            return True
    return False
