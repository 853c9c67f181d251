"""HTML to normalized text, keeping back-pointers into the raw markup."""
from __future__ import annotations

import bisect
import html.entities
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

# Symbols dropped during normalization.
STRIP_SYMBOLS = frozenset("&*;:")

BLOCK_TAGS = frozenset(
    "html head body div p br table thead tbody tr td th ul ol li title "
    "h1 h2 h3 h4 h5 h6 section header footer nav article hr form".split()
)
SKIP_TAGS = frozenset({"script", "style"})


class _Collector(HTMLParser):
    def __init__(self, source: str):
        super().__init__(convert_charrefs=False)
        self.chars: list[str] = []
        self.origins: list[int] = []
        self._skip = 0
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", source)]

    def _offset(self) -> int:
        line, col = self.getpos()
        return self._line_starts[line - 1] + col

    def _emit(self, text: str, start: int) -> None:
        if self._skip:
            return
        self.chars.extend(text)
        self.origins.extend(range(start, start + len(text)))

    def _boundary(self) -> None:
        if not self._skip:
            self.chars.append(" ")
            self.origins.append(-1)

    def handle_starttag(self, tag, attrs):
        if tag in SKIP_TAGS:
            self._skip += 1
        elif tag in BLOCK_TAGS:
            self._boundary()

    def handle_startendtag(self, tag, attrs):
        if tag in BLOCK_TAGS:
            self._boundary()

    def handle_endtag(self, tag):
        if tag in SKIP_TAGS:
            self._skip = max(0, self._skip - 1)
        elif tag in BLOCK_TAGS:
            self._boundary()

    def handle_data(self, data):
        self._emit(data, self._offset())

    def handle_entityref(self, name):
        start = self._offset()
        if name in html.entities.name2codepoint:
            if not self._skip:
                self.chars.append(chr(html.entities.name2codepoint[name]))
                self.origins.append(start)
        else:
            self._emit(f"&{name}", start)

    def handle_charref(self, name):
        start = self._offset()
        try:
            cp = int(name[1:], 16) if name[:1] in "xX" else int(name)
            char = chr(cp)
        except (ValueError, OverflowError):
            self._emit(f"&#{name}", start)
            return
        if not self._skip:
            self.chars.append(char)
            self.origins.append(start)


def _collapse(chars, origins, *, lower=False, strip_symbols=False):
    """Collapse whitespace runs to one space and trim; optionally lowercase and drop symbols."""
    out_c: list[str] = []
    out_o: list[int] = []
    pending_space = False
    for ch, o in zip(chars, origins):
        if strip_symbols and ch in STRIP_SYMBOLS:
            continue
        if ch.isspace():
            pending_space = True
            continue
        if pending_space and out_c:
            out_c.append(" ")
            out_o.append(-1)
        pending_space = False
        if lower:
            low = ch.lower()
            out_c.extend(low)
            out_o.extend([o] * len(low))
        else:
            out_c.append(ch)
            out_o.append(o)
    return out_c, out_o


def extract_text(markup: str) -> tuple[str, list[int]]:
    """Tag-stripped text plus, per output char, its index in ``markup`` (-1 if synthetic)."""
    parser = _Collector(markup)
    try:
        parser.feed(markup)
        parser.close()
    except Exception:  # malformed markup: keep what was collected
        pass
    chars, origins = _collapse(parser.chars, parser.origins)
    return "".join(chars), origins


def html_to_text(markup: str) -> str:
    return extract_text(markup)[0]


def normalize_with_offsets(text: str, origins: list[int] | None = None) -> tuple[str, list[int]]:
    if origins is None:
        origins = list(range(len(text)))
    chars, out = _collapse(text, origins, lower=True, strip_symbols=True)
    return "".join(chars), out


def normalize(text: str) -> str:
    """Lowercase, drop ``& * ; :``, collapse whitespace runs, trim."""
    return normalize_with_offsets(text)[0]


Token = tuple[str, int, int]


def tokenize(text: str) -> list[Token]:
    return [(m.group(), m.start(), m.end()) for m in re.finditer(r"\S+", text)]


@dataclass
class NormalizedDoc:
    page_id: str
    market_id: str
    text: str
    tokens: list[Token]
    language: str = "en"
    origins: list[int] = field(default_factory=list, repr=False)

    @classmethod
    def from_html(cls, page_id, market_id, markup, language="en") -> "NormalizedDoc":
        raw, raw_origins = extract_text(markup)
        text, origins = normalize_with_offsets(raw, raw_origins)
        return cls(page_id, market_id, text, tokenize(text), language, origins)

    @classmethod
    def from_text(cls, page_id, market_id, text, language="en") -> "NormalizedDoc":
        norm, origins = normalize_with_offsets(text)
        return cls(page_id, market_id, norm, tokenize(norm), language, origins)

    def locate_raw(self, raw_start: int, raw_end: int) -> tuple[int, int] | None:
        """Map a half-open span of the raw markup onto normalized-text offsets."""
        hits = [i for i, o in enumerate(self.origins) if raw_start <= o < raw_end]
        if not hits:
            return None
        return hits[0], hits[-1] + 1

    def token_index(self, char_pos: int) -> int | None:
        """Index of the token containing ``char_pos``."""
        starts = [t[1] for t in self.tokens]
        k = bisect.bisect_right(starts, char_pos) - 1
        if k >= 0 and self.tokens[k][1] <= char_pos < self.tokens[k][2]:
            return k
        return None
