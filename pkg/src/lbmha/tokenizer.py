"""Social-media-aware tokenizer.

A deliberately small, fully specified rule set: protect a fixed emoticon list,
hashtags, @mentions and internal apostrophes; split on whitespace; strip edge
punctuation; lowercase.  URL-like tokens are dropped defensively even though
URL posts are filtered upstream.
"""

from __future__ import annotations

import re
import string
import unicodedata
from dataclasses import dataclass, field

#: Emoticons kept as single tokens, matched case-insensitively.
EMOTICONS = frozenset(
    [":)", ":(", ":d", ";)", "<3", ":-)", ":-(", ":/", ":p", "xd"]
)

_TAG_RE = re.compile(r"[#@]\w+", re.UNICODE)
_URL_PREFIXES = ("http://", "https://", "www.")

# Edge punctuation: ASCII punctuation plus common typographic marks.
_PUNCT = string.punctuation + "“”‘’´…–—"
_STRIP_OUTER = "".join(c for c in _PUNCT if c not in "#@'")
_STRIP_ALL = _PUNCT + "'"
_QUOTES = "\"'“”‘’"


@dataclass(slots=True)
class TokenStream:
    tokens: list[str] = field(default_factory=list)
    source_message_id: str = ""

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def _is_url_like(token: str) -> bool:
    return token.lower().startswith(_URL_PREFIXES)


def _emit(raw: str) -> str | None:
    if _is_url_like(raw):
        return None
    if raw.lower() in EMOTICONS:
        return raw.lower()
    unquoted = raw.strip(_QUOTES)
    if unquoted.lower() in EMOTICONS:
        return unquoted.lower()
    t = raw.strip(_STRIP_OUTER)
    if not t:
        return None
    t = t.strip("'")
    if not t:
        return None
    if _TAG_RE.fullmatch(t):
        return t.lower()
    t = t.strip(_STRIP_ALL)
    if not t or _is_url_like(t):
        return None
    return t.lower()


def tokenize(text: str, source_message_id: str = "") -> TokenStream:
    """Split a message into lowercase tokens compatible with lexicon lookup.

    Deterministic and pure; empty input yields an empty stream.  Hashtags,
    mentions, listed emoticons and contractions survive as single tokens;
    other leading/trailing punctuation is stripped.
    """
    out: list[str] = []
    if text:
        for raw in unicodedata.normalize("NFC", text).split():
            token = _emit(raw)
            if token:
                out.append(token)
    return TokenStream(out, source_message_id)
