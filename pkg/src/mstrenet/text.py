"""Lyrics normalization, music/silence tagging and transcript files."""

from __future__ import annotations

import re
import unicodedata

SILENCE_TAG = "<silence>"
MUSIC_TAG = "<music>"
PSEUDO_WORDS = (SILENCE_TAG, MUSIC_TAG)
DOMAINS = ("monophonic", "polyphonic")
DOMAIN_TAGS = {"monophonic": SILENCE_TAG, "polyphonic": MUSIC_TAG}

_ONES = ("ZERO ONE TWO THREE FOUR FIVE SIX SEVEN EIGHT NINE TEN ELEVEN TWELVE THIRTEEN "
         "FOURTEEN FIFTEEN SIXTEEN SEVENTEEN EIGHTEEN NINETEEN").split()
_TENS = "_ _ TWENTY THIRTY FORTY FIFTY SIXTY SEVENTY EIGHTY NINETY".split()

_DROP = re.compile(r"[^A-Za-z0-9'\s-]")
_DIGITS = re.compile(r"\d+")
_RUNS = re.compile(r"([A-Z])\1{2,}")
_TOKEN_OK = re.compile(r"^[A-Z']+$")


def _below_thousand(n: int) -> list[str]:
    words = []
    if n >= 100:
        words += [_ONES[n // 100], "HUNDRED"]
        n %= 100
        if n == 0:
            return words
    if n < 20:
        words.append(_ONES[n])
    else:
        words.append(_TENS[n // 10])
        if n % 10:
            words.append(_ONES[n % 10])
    return words


def number_to_words(n: int) -> list[str]:
    """English long form without "and": 401 -> FOUR HUNDRED ONE."""
    if not 0 <= n <= 999_999:
        raise ValueError(f"{n} outside 0..999999")
    if n < 1000:
        return _below_thousand(n)
    words = _below_thousand(n // 1000) + ["THOUSAND"]
    if n % 1000:
        words += _below_thousand(n % 1000)
    return words


def _spell_digits(match: re.Match) -> str:
    run = match.group(0)
    if len(run) <= 6:
        words = number_to_words(int(run))
    else:
        words = [_ONES[int(d)] for d in run]
    return " " + " ".join(words) + " "


def _join_hyphens(tokens: list[str]) -> list[str]:
    out: list[str] = []
    carry = ""
    for tok in tokens:
        dangling = tok.endswith("-")
        piece = tok.replace("-", "")
        if dangling:
            carry += piece
            continue
        piece = carry + piece
        carry = ""
        if piece:
            out.append(piece)
    if carry:
        out.append(carry)
    return out


def normalize_lyrics(raw: str) -> list[str]:
    """Normalize raw lyrics into uppercase word tokens.

    Non-ASCII letters are transliterated, punctuation other than apostrophes
    becomes whitespace, hyphenated fragments are rejoined, integers are
    spelled out and letter runs longer than two are cut to two.
    """
    text = unicodedata.normalize("NFKD", raw).encode("ascii", "ignore").decode("ascii")
    text = _DROP.sub(" ", text)
    text = " ".join(_join_hyphens(text.split()))
    text = _DIGITS.sub(_spell_digits, text).upper()
    text = _RUNS.sub(r"\1\1", text)
    return [tok for tok in text.split() if tok.strip("'")]


def tag_utterance(tokens, domain: str) -> list[str]:
    """Wrap a normalized word sequence in the domain's boundary pseudo-word."""
    if domain not in DOMAIN_TAGS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    tokens = list(tokens)
    if any(tok in PSEUDO_WORDS for tok in tokens):
        raise ValueError("double tagging")
    tag = DOMAIN_TAGS[domain]
    return [tag, *tokens, tag]


def strip_tags(tokens) -> list[str]:
    return [tok for tok in tokens if tok not in PSEUDO_WORDS]


def is_valid_transcript(tokens) -> bool:
    tokens = list(tokens)
    if not tokens:
        return False
    for tok in tokens:
        if tok not in PSEUDO_WORDS and not _TOKEN_OK.match(tok):
            return False
    tags = [i for i, tok in enumerate(tokens) if tok in PSEUDO_WORDS]
    if not tags:
        return True
    return (tags == [0, len(tokens) - 1] and tokens[0] == tokens[-1])


def domain_of(tokens) -> str | None:
    """Domain implied by the boundary tag, or None for an untagged sequence."""
    for domain, tag in DOMAIN_TAGS.items():
        if tokens and tokens[0] == tag:
            return domain
    return None


def read_transcripts(path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            utt, sep, text = line.partition("\t")
            if not sep or not utt:
                raise ValueError(f"{path}:{lineno}: expected 'UTT_ID<TAB>tokens'")
            if utt in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt}")
            out[utt] = text.split()
    return out


def write_transcripts(path, transcripts) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for utt, tokens in transcripts.items():
            f.write(f"{utt}\t{' '.join(tokens)}\n")
