"""Deterministic text cleaning, tokenization, and lemmatization.

Every report component (titles, descriptions, questions, answers) passes
through the same pipeline before scoring, so lexical quirks cancel out
between query and corpus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "TokenStream",
    "clean",
    "tokenize",
    "lemmatize",
    "preprocess",
    "contains_stack_trace",
    "find_long_fenced_block",
    "contains_image_or_video",
    "IMAGE_MARKUP_RE",
    "MEDIA_TAG_RE",
]

URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
IMAGE_MARKUP_RE = re.compile(r"!\[[^\]]*\]\s*\([^)]*\)")
MEDIA_TAG_RE = re.compile(r"</?(?:img|video|source)\b[^>]*>", re.IGNORECASE)
# Literal two-character escapes pasted into prose, e.g. "foo\nbar" inside a body.
LITERAL_ESCAPE_RE = re.compile(r"\\[ntr]")
CONTROL_CHAR_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f]")

# Stack-frame patterns. The dotted-path requirement keeps prose like
# "crashed at init()" intact; only qualified frames are treated as noise.
FRAME_LINE_RE = re.compile(r"^\s*at\s+[\w$]+(?:\.[\w$<>]+)+\([^()]*\)\s*$")
FRAME_SPAN_RE = re.compile(r"\bat\s+[\w$]+(?:\.[\w$<>]+)+\([^()]*\)")
TRACEBACK_LINE_RE = re.compile(r"^\s*Traceback \(most recent call last\):\s*$")
TRACEBACK_SPAN_RE = re.compile(r"\bTraceback\s+\(most\s+recent\s+call\s+last\):")
AT_RUN_LINE_RE = re.compile(r"^[ \t]+at\s")

WHITESPACE_RE = re.compile(r"\s+")

FENCE_RE = re.compile(r"^\s*(```|~~~)")


@dataclass(slots=True)
class TokenStream:
    """Ordered lowercase tokens plus their origin spans in the cleaned text."""

    tokens: list[str] = field(default_factory=list)
    spans: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def _drop_trace_lines(text: str) -> str:
    lines = text.split("\n")
    keep = [True] * len(lines)

    i = 0
    while i < len(lines):
        if TRACEBACK_LINE_RE.match(lines[i]):
            keep[i] = False
            j = i + 1
            # Frame lines of a traceback are indented; the final unindented
            # exception message is informative text and stays.
            while j < len(lines) and lines[j].strip() and lines[j][0] in " \t":
                keep[j] = False
                j += 1
            i = j
            continue
        i += 1

    for i, line in enumerate(lines):
        if FRAME_LINE_RE.match(line):
            keep[i] = False

    i = 0
    while i < len(lines):
        if AT_RUN_LINE_RE.match(lines[i]):
            j = i
            while j < len(lines) and AT_RUN_LINE_RE.match(lines[j]):
                j += 1
            if j - i >= 3:
                for k in range(i, j):
                    keep[k] = False
            i = j
        else:
            i += 1

    return "\n".join(line for line, kept in zip(lines, keep) if kept)


def clean(text: str) -> str:
    """Strip URLs, image/video markup, escape noise, and stack traces.

    Whitespace is collapsed to single spaces. Idempotent: cleaning a
    cleaned string is a no-op, and no characters other than single
    spaces are ever introduced.
    """
    out = text.replace("\r\n", "\n").replace("\r", "\n")
    out = _drop_trace_lines(out)
    out = IMAGE_MARKUP_RE.sub(" ", out)
    out = MEDIA_TAG_RE.sub(" ", out)
    out = URL_RE.sub(" ", out)
    # Safety net for frames not isolated on their own line; keeps the
    # pipeline idempotent when whitespace collapse would rejoin them.
    out = TRACEBACK_SPAN_RE.sub(" ", out)
    out = FRAME_SPAN_RE.sub(" ", out)
    out = LITERAL_ESCAPE_RE.sub(" ", out)
    out = CONTROL_CHAR_RE.sub(" ", out)
    return WHITESPACE_RE.sub(" ", out).strip()


TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> TokenStream:
    """Split on non-alphanumeric boundaries, lowercase, keep offsets.

    Underscores and intra-token digits survive, so code identifiers come
    through whole: "v2.3.1-rc" -> [v2, 3, 1, rc].
    """
    lowered = text.lower()
    stream = TokenStream()
    for match in TOKEN_RE.finditer(lowered):
        stream.tokens.append(match.group())
        stream.spans.append((match.start(), match.end()))
    return stream


_VOWELS = frozenset("aeiou")

# Irregular forms plus words the suffix rules would otherwise damage.
_LEMMA_EXCEPTIONS = {
    "is": "be", "are": "be", "was": "be", "were": "be", "been": "be",
    "being": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    "goes": "go", "went": "go", "gone": "go", "going": "go",
    "ran": "run",
    "got": "get", "gotten": "get", "getting": "get",
    "made": "make", "said": "say", "saw": "see", "seen": "see",
    "threw": "throw", "thrown": "throw",
    "used": "use", "uses": "use", "using": "use",
    "gave": "give", "given": "give",
    "took": "take", "taken": "take",
    "came": "come", "coming": "come",
    "children": "child", "mice": "mouse", "men": "man", "women": "woman",
    "feet": "foot",
    "series": "series", "species": "species", "during": "during",
    "nothing": "nothing", "something": "something", "anything": "anything",
    "everything": "everything",
}


def _is_consonant(ch: str) -> bool:
    return ch.isalpha() and ch not in _VOWELS


def _has_vowel(word: str) -> bool:
    return any(ch in _VOWELS for ch in word)


def _ends_cvc(stem: str) -> bool:
    # consonant-vowel-consonant tail means the inflection dropped an "e"
    # (mak+ing -> make); w/x/y finals never take the restored e.
    if len(stem) < 3:
        return False
    a, b, c = stem[-3], stem[-2], stem[-1]
    return _is_consonant(c) and c not in "wxy" and b in _VOWELS and _is_consonant(a)


def _strip_ing_ed(token: str, suffix: str) -> str:
    stem = token[: -len(suffix)]
    if not _has_vowel(stem):
        return token
    if (
        len(stem) >= 4
        and stem[-1] == stem[-2]
        and _is_consonant(stem[-1])
        and stem[-1] not in "lsz"
    ):
        return stem[:-1]
    if _ends_cvc(stem):
        return stem + "e"
    if len(stem) >= 3:
        return stem
    return token


def _lemma(token: str) -> str:
    # Iterate to a fixpoint so chained inflections ("settings" -> "setting"
    # -> "set") cannot break list-level idempotence. Each rewrite shortens
    # the token (exception hops are single), so this terminates.
    current = token
    while True:
        step = _lemma_once(current)
        if step == current:
            return current
        current = step


def _lemma_once(token: str) -> str:
    mapped = _LEMMA_EXCEPTIONS.get(token)
    if mapped is not None:
        return mapped
    if not token.isalpha() or len(token) < 4:
        # code identifiers (digits, underscores) and short words pass through
        return token
    if token.endswith("sses"):
        return token[:-2]
    if len(token) >= 5 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) >= 5 and token.endswith("ied"):
        return token[:-3] + "y"
    if token.endswith("es") and token[-3] in "sxzh" and len(token) >= 4:
        stripped = token[:-2]
        if len(stripped) >= 2:
            return stripped
    if (
        token.endswith("s")
        and not token.endswith("ss")
        and not token.endswith("us")
        and not token.endswith("is")
    ):
        return token[:-1]
    if len(token) >= 6 and token.endswith("ing"):
        return _strip_ing_ed(token, "ing")
    if len(token) >= 5 and token.endswith("ed") and not token.endswith("eed"):
        return _strip_ing_ed(token, "ed")
    return token


def lemmatize(tokens: list[str]) -> list[str]:
    """Rule-based English lemmatizer: plurals and common verb inflections.

    Unknown and code-like tokens pass through unchanged. Idempotent, so the
    corpus side and the query side can apply it independently.
    """
    return [_lemma(t) for t in tokens]


def preprocess(text: str) -> list[str]:
    """Full pipeline: clean -> tokenize -> lemmatize."""
    return lemmatize(tokenize(clean(text)).tokens)


def contains_stack_trace(text: str) -> bool:
    """True when any configured stack-frame pattern occurs in the raw text."""
    if TRACEBACK_SPAN_RE.search(text):
        return True
    run = 0
    for line in text.replace("\r\n", "\n").split("\n"):
        if FRAME_LINE_RE.match(line):
            return True
        if AT_RUN_LINE_RE.match(line):
            run += 1
            if run >= 3:
                return True
        else:
            run = 0
    return False


def find_long_fenced_block(text: str, max_lines: int = 10) -> int | None:
    """Return the line count of the first fenced code block over the limit.

    Inline code spans are exempt; only ``` / ~~~ fenced blocks are counted.
    An unterminated fence runs to the end of the text.
    """
    in_fence = False
    count = 0
    for line in text.replace("\r\n", "\n").split("\n"):
        if FENCE_RE.match(line):
            if in_fence:
                if count > max_lines:
                    return count
                in_fence = False
            else:
                in_fence = True
                count = 0
        elif in_fence:
            count += 1
    if in_fence and count > max_lines:
        return count
    return None


def contains_image_or_video(text: str) -> tuple[bool, str | None]:
    """Detect image/video markup; returns (found, kind)."""
    if IMAGE_MARKUP_RE.search(text):
        return True, "image"
    match = MEDIA_TAG_RE.search(text)
    if match:
        kind = "video" if "video" in match.group().lower() else "image"
        return True, kind
    return False, None
