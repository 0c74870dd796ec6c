"""CMU-format pronunciation lexicon, vowel-duplication variants and a
rule-table grapheme-to-phoneme fallback for OOV words."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .text import MUSIC_TAG, SILENCE_TAG

BASE_PHONES = (
    "AA AE AH AO AW AY B CH D DH EH ER EY F G HH IH IY JH K L M N NG "
    "OW OY P R S SH T TH UH UW V W Y Z ZH"
).split()
VOWEL_BASES = frozenset("AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW".split())
SIL, MUS, SPN = "SIL", "MUS", "SPN"
SILENCE_CLASS = (SIL, MUS)
# one HMM state per base phone; SPN is a reserved garbage state
STATE_PHONES = tuple(BASE_PHONES) + (SIL, MUS, SPN)
STATE_INDEX = {p: i for i, p in enumerate(STATE_PHONES)}
NUM_STATES = len(STATE_PHONES)

PSEUDO_PRONS = {SILENCE_TAG: (SIL,), MUSIC_TAG: (MUS,)}

_VARIANT = re.compile(r"^(.+)\((\d+)\)$")
_WORD = re.compile(r"^[A-Z']+$")


@dataclass(frozen=True)
class Phoneme:
    symbol: str
    is_vowel: bool
    is_silence_class: bool


def base_phone(symbol: str) -> str:
    return symbol.rstrip("012")


def is_vowel(symbol: str) -> bool:
    return symbol[-1:] in ("0", "1", "2") and base_phone(symbol) in VOWEL_BASES


def in_inventory(symbol: str) -> bool:
    if symbol in (SIL, MUS, SPN):
        return True
    if is_vowel(symbol):
        return True
    return symbol in BASE_PHONES and symbol not in VOWEL_BASES


def phoneme(symbol: str) -> Phoneme:
    if not in_inventory(symbol):
        raise ValueError(f"unknown phoneme {symbol!r}")
    return Phoneme(symbol, is_vowel(symbol), symbol in SILENCE_CLASS)


def state_of(symbol: str) -> int:
    """HMM state id for a phoneme (stress digits share their base phone's state)."""
    return STATE_INDEX[base_phone(symbol)]


class Lexicon:
    """Word -> ordered set of pronunciations (tuples of phoneme symbols)."""

    def __init__(self, entries=None):
        self._entries: dict[str, dict[tuple[str, ...], None]] = {}
        for word, prons in (entries or {}).items():
            for pron in prons:
                self.add(word, pron)
        for word, pron in PSEUDO_PRONS.items():
            self._entries[word] = {pron: None}

    def add(self, word: str, pron) -> None:
        pron = tuple(pron)
        if not pron:
            raise ValueError(f"empty pronunciation for {word!r}")
        for p in pron:
            if not in_inventory(p):
                raise ValueError(f"{word}: phoneme {p!r} not in inventory")
        self._entries.setdefault(word, {})[pron] = None

    def __contains__(self, word) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def pronunciations(self, word: str) -> list[tuple[str, ...]]:
        try:
            return list(self._entries[word])
        except KeyError:
            raise KeyError(f"word {word!r} not in lexicon") from None

    def items(self):
        for word, prons in self._entries.items():
            yield word, list(prons)

    def words(self, include_pseudo: bool = False) -> list[str]:
        return [w for w in self._entries if include_pseudo or w not in PSEUDO_PRONS]

    def copy(self) -> "Lexicon":
        return Lexicon({w: list(p) for w, p in self._entries.items() if w not in PSEUDO_PRONS})

    def subset(self, words) -> "Lexicon":
        return Lexicon({w: self.pronunciations(w) for w in words if w not in PSEUDO_PRONS})

    def __eq__(self, other) -> bool:
        return isinstance(other, Lexicon) and self._entries == other._entries


def parse_lexicon(text: str) -> Lexicon:
    """Parse CMU dict text: ``WORD  PH1 PH2 ...``, ``WORD(2)`` variants and
    ``;;;`` comments."""
    lex = Lexicon()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith(";;;"):
            continue
        parts = line.split()
        head = parts[0]
        m = _VARIANT.match(head)
        word = m.group(1) if m else head
        if not _WORD.match(word):
            raise ValueError(f"line {lineno}: malformed word {head!r}")
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: empty pronunciation for {word!r}")
        try:
            lex.add(word, parts[1:])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return lex


def serialize_lexicon(lex: Lexicon) -> str:
    """CMU text, words sorted, variants numbered in insertion order.  The
    pseudo-words are implicit and not written."""
    lines = []
    for word in sorted(lex.words()):
        for i, pron in enumerate(lex.pronunciations(word)):
            head = word if i == 0 else f"{word}({i + 1})"
            lines.append(f"{head}  {' '.join(pron)}")
    return "".join(line + "\n" for line in lines)


def double_vowels(pron) -> tuple[str, ...]:
    out: list[str] = []
    for p in pron:
        out.append(p)
        if is_vowel(p):
            out.append(p)
    return tuple(out)


def expand_vowel_variants(lex: Lexicon) -> Lexicon:
    """Add, for each pronunciation with a vowel, the variant with every vowel doubled."""
    out = lex.copy()
    for word in lex.words():
        for pron in lex.pronunciations(word):
            if any(is_vowel(p) for p in pron):
                out.add(word, double_vowels(pron))
    return out


# longest match first; vowels carry primary stress
G2P_RULES = {
    "TCH": ("CH",), "SCH": ("S", "K"),
    "CH": ("CH",), "SH": ("SH",), "TH": ("TH",), "PH": ("F",), "NG": ("NG",),
    "CK": ("K",), "WH": ("W",), "QU": ("K", "W"), "GH": ("G",), "KN": ("N",),
    "EE": ("IY1",), "EA": ("IY1",), "OO": ("UW1",), "OU": ("AW1",), "OW": ("OW1",),
    "AI": ("EY1",), "AY": ("EY1",), "OI": ("OY1",), "OY": ("OY1",), "AU": ("AO1",),
    "AW": ("AO1",), "IE": ("IY1",), "EY": ("EY1",),
    "A": ("AA1",), "E": ("EH1",), "I": ("IH1",), "O": ("AA1",), "U": ("AH1",),
    "Y": ("IY1",),
    "B": ("B",), "C": ("K",), "D": ("D",), "F": ("F",), "G": ("G",), "H": ("HH",),
    "J": ("JH",), "K": ("K",), "L": ("L",), "M": ("M",), "N": ("N",), "P": ("P",),
    "Q": ("K",), "R": ("R",), "S": ("S",), "T": ("T",), "V": ("V",), "W": ("W",),
    "X": ("K", "S"), "Z": ("Z",),
}
_MAX_RULE = max(len(k) for k in G2P_RULES)
_VOWEL_LETTERS = set("AEIOU")


def g2p_fallback(word: str, lex: Lexicon | None = None) -> tuple[str, ...]:
    """Deterministic letter-cluster pronunciation for an OOV word."""
    if not word:
        raise ValueError("empty word")
    if not _WORD.match(word):
        raise ValueError(f"{word!r} is not an uppercase word")
    if lex is not None and word in lex:
        raise ValueError(f"{word!r} is not OOV")
    letters = word.replace("'", "")
    # doubled consonant letters sound once
    letters = re.sub(r"([B-DF-HJ-NP-TV-Z])\1", r"\1", letters)
    out: list[str] = []
    i = 0
    while i < len(letters):
        for size in range(min(_MAX_RULE, len(letters) - i), 0, -1):
            chunk = letters[i:i + size]
            if chunk in G2P_RULES:
                # consonantal Y before a vowel
                if chunk == "Y" and i + 1 < len(letters) and letters[i + 1] in _VOWEL_LETTERS:
                    out.append("Y")
                else:
                    out.extend(G2P_RULES[chunk])
                i += size
                break
    if not out:
        raise ValueError(f"no pronunciation derivable for {word!r}")
    return tuple(out)


def add_oov(lex: Lexicon, words) -> list[str]:
    """Add rule-table pronunciations for every word missing from ``lex``."""
    added = []
    for word in words:
        if word not in lex:
            lex.add(word, g2p_fallback(word, lex))
            added.append(word)
    return added
