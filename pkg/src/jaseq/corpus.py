"""Bunsetsu-annotated corpus ingestion.

The annotated corpus format is one JSON object per line:

    {"lang": "ja", "tokens": ["猫", "が", "鳴く", "。"], "bunsetsu": [[0, 2], [2, 4]]}

``bunsetsu`` holds half-open [start, end) spans over ``tokens`` and, when
present, must tile the whole token range.  Non-Japanese corpora normally
omit it.  Plain corpora are one whitespace-tokenized sentence per line;
parallel corpora are two aligned plain files of equal line count.
"""

import json
from dataclasses import dataclass, field

from .errors import ParseError
from .tokens import DEFAULT_LANGUAGES, special_tokens

DEFAULT_MAX_TOKENS = 175


@dataclass
class AnnotatedSentence:
    """A tokenized sentence with optional bunsetsu spans.

    ``bunsetsu`` is a list of half-open (start, end) index pairs over
    ``tokens``; empty means "no annotation" (typical for non-Japanese
    text), never "zero-width spans".
    """

    lang: str
    tokens: list
    bunsetsu: list = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    @property
    def has_bunsetsu(self):
        return bool(self.bunsetsu)

    def bunsetsu_tokens(self):
        """Token slices, one list per bunsetsu."""
        return [self.tokens[s:e] for s, e in self.bunsetsu]


@dataclass
class ParallelPair:
    """An aligned source/target sentence pair; languages must differ."""

    src: AnnotatedSentence
    tgt: AnnotatedSentence


@dataclass
class ValidationReport:
    sentences: int = 0
    tokens: int = 0
    bunsetsus: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "sentences": self.sentences,
            "tokens": self.tokens,
            "bunsetsus": self.bunsetsus,
            "violations": [{"record": i, "error": msg} for i, msg in self.violations],
        }


def check_sentence(s, languages=None):
    """Return the first violated invariant as a message, or None if valid.

    Checked in a fixed order so error messages are deterministic: language,
    token well-formedness, then span structure.
    """
    langs = languages if languages is not None else DEFAULT_LANGUAGES
    reserved = set(special_tokens(langs))
    if s.lang not in langs:
        return f"unknown language {s.lang!r} (configured: {', '.join(langs)})"
    if not s.tokens:
        return "sentence has no tokens"
    for i, tok in enumerate(s.tokens):
        if not tok:
            return f"empty token at position {i}"
        if any(c.isspace() for c in tok):
            return f"token at position {i} contains whitespace: {tok!r}"
        if tok in reserved:
            return f"token at position {i} is a reserved special token: {tok}"
    if s.bunsetsu:
        prev_end = 0
        for k, span in enumerate(s.bunsetsu):
            if len(span) != 2:
                return f"bunsetsu {k} is not a [start, end] pair"
            start, end = span
            if not (isinstance(start, int) and isinstance(end, int)):
                return f"bunsetsu {k} has non-integer bounds"
            if start >= end:
                return f"bunsetsu {k} is empty or inverted: [{start}, {end})"
            if start < prev_end:
                return f"bunsetsu {k} overlaps the previous span at {start}"
            if start > prev_end:
                return f"gap before bunsetsu {k}: tokens [{prev_end}, {start}) uncovered"
            if end > len(s.tokens):
                return f"bunsetsu {k} ends at {end}, past the last token"
            prev_end = end
        if prev_end != len(s.tokens):
            return f"spans do not tile token range: tokens [{prev_end}, {len(s.tokens)}) uncovered"
    return None


def parse_annotated_line(line, lang=None, line_no=None, languages=None):
    """Parse one JSON record into a validated AnnotatedSentence.

    ``lang`` is the fallback language for records that omit the "lang"
    key.  Raises ParseError (with ``line_no`` when given) on malformed
    JSON or any violated sentence invariant.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line_no) from e
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", line_no)
    rec_lang = obj.get("lang", lang)
    if rec_lang is None:
        raise ParseError('missing "lang" key and no default language given', line_no)
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ParseError('"tokens" must be an array of strings', line_no)
    raw_spans = obj.get("bunsetsu", [])
    if not isinstance(raw_spans, list):
        raise ParseError('"bunsetsu" must be an array of [start, end] pairs', line_no)
    spans = []
    for sp in raw_spans:
        if not (isinstance(sp, list) and len(sp) == 2):
            raise ParseError('"bunsetsu" must be an array of [start, end] pairs', line_no)
        spans.append((sp[0], sp[1]))
    s = AnnotatedSentence(lang=rec_lang, tokens=list(tokens), bunsetsu=spans)
    problem = check_sentence(s, languages)
    if problem is not None:
        raise ParseError(problem, line_no)
    return s


def serialize_sentence(s):
    """Inverse of parse_annotated_line; omits "bunsetsu" when empty."""
    obj = {"lang": s.lang, "tokens": list(s.tokens)}
    if s.bunsetsu:
        obj["bunsetsu"] = [[start, end] for start, end in s.bunsetsu]
    return json.dumps(obj, ensure_ascii=False)


def read_annotated_corpus(path, lang=None, languages=None):
    """Yield AnnotatedSentences from a JSONL file, skipping blank lines."""
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            yield parse_annotated_line(line, lang=lang, line_no=line_no, languages=languages)


def write_annotated_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(serialize_sentence(s) + "\n")


def read_plain_corpus(path, lang):
    """Whitespace-tokenized sentences, one per line; blank lines skipped."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.split()
            if tokens:
                yield AnnotatedSentence(lang=lang, tokens=tokens)


def read_parallel_corpus(src_path, src_lang, tgt_path, tgt_lang):
    """Read two aligned plain files into a list of ParallelPairs.

    Raises ParseError if line counts differ or languages coincide.
    """
    if src_lang == tgt_lang:
        raise ParseError(f"parallel corpus sides share a language: {src_lang}")
    with open(src_path, encoding="utf-8") as f:
        src_lines = f.readlines()
    with open(tgt_path, encoding="utf-8") as f:
        tgt_lines = f.readlines()
    if len(src_lines) != len(tgt_lines):
        raise ParseError(
            f"parallel files have different line counts: {len(src_lines)} vs {len(tgt_lines)}"
        )
    pairs = []
    for ls, lt in zip(src_lines, tgt_lines):
        pairs.append(
            ParallelPair(
                src=AnnotatedSentence(lang=src_lang, tokens=ls.split()),
                tgt=AnnotatedSentence(lang=tgt_lang, tokens=lt.split()),
            )
        )
    return pairs


def filter_by_length(corpus, max_len=DEFAULT_MAX_TOKENS):
    """Drop sentences longer than ``max_len`` tokens, preserving order.

    The cutoff is inclusive: a sentence of exactly ``max_len`` tokens is
    kept.  Applied at the word level, before subword segmentation.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be positive, got {max_len}")
    for s in corpus:
        if len(s.tokens) <= max_len:
            yield s


def validate_corpus(corpus, languages=None):
    """Count records and collect invariant violations without raising."""
    report = ValidationReport()
    for idx, s in enumerate(corpus):
        report.sentences += 1
        report.tokens += len(s.tokens)
        report.bunsetsus += len(s.bunsetsu)
        problem = check_sentence(s, languages)
        if problem is not None:
            report.violations.append((idx, problem))
    return report
