"""Joint byte-pair-encoding subword segmentation.

Merge rules are learned from a frequency-weighted concatenation of all
monolingual corpora plus an oversampled fine-tuning corpus, then applied
word by word.  Non-final pieces of a word carry a "@@" suffix so that
segmentation is exactly reversible, and bunsetsu spans are remapped to
subword indices without changing the number of bunsetsus.
"""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import AnnotatedSentence
from .errors import ConfigError
from .tokens import DEFAULT_LANGUAGES, UNK, special_tokens

MARKER = "@@"
MODEL_FORMAT = "jaseq-bpe v1"


def vocab_fingerprint(vocab):
    """Stable digest of a token -> id map, used to detect mismatched
    vocabularies between artifacts (tokenizer files, checkpoints)."""
    import hashlib

    h = hashlib.sha256()
    for token, idx in sorted(vocab.items(), key=lambda kv: kv[1]):
        h.update(f"{token}\t{idx}\n".encode("utf-8"))
    return h.hexdigest()


@dataclass
class SubwordModel:
    """Learned merge rules plus the joint vocabulary.

    ``merges`` is ordered: earlier rules have priority at application
    time.  ``vocab`` maps every emittable subword form (both the plain
    and the "@@"-marked variant of each unit) to an integer id; special
    tokens occupy the lowest ids.  Marked and unmarked forms count
    separately toward ``vocab_size_target``.
    """

    merges: list
    vocab: dict
    vocab_size_target: int
    special_tokens: tuple
    marker: str = MARKER
    _ranks: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    @property
    def unk_id(self):
        return self.vocab[UNK]

    def token_id(self, token):
        """Vocabulary id of a token string; unknown strings map to [UNK]."""
        return self.vocab.get(token, self.unk_id)

    def segment_word(self, word):
        """Split one word into subword pieces, non-final pieces marked.

        Greedy: among the adjacent symbol pairs present, the earliest
        learned merge is applied first (all occurrences, left to right),
        until no learned pair remains.
        """
        cached = self._cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = list(word)
        while len(symbols) > 1:
            best = None
            for pair in zip(symbols, symbols[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, pair)
            if best is None:
                break
            _, (a, b) = best
            merged = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        pieces = [s + self.marker for s in symbols[:-1]] + [symbols[-1]]
        self._cache[word] = tuple(pieces)
        return pieces

    def vocab_hash(self):
        """Stable digest of the id map, used to detect checkpoint mismatch."""
        return vocab_fingerprint(self.vocab)

    def save(self, prefix):
        """Write ``<prefix>.merges`` and ``<prefix>.vocab``."""
        with open(f"{prefix}.merges", "w", encoding="utf-8") as f:
            f.write(f"#{MODEL_FORMAT} marker={self.marker} "
                    f"vocab_size={self.vocab_size_target} "
                    f"specials={len(self.special_tokens)}\n")
            for a, b in self.merges:
                f.write(f"{a} {b}\n")
        with open(f"{prefix}.vocab", "w", encoding="utf-8") as f:
            for token, idx in sorted(self.vocab.items(), key=lambda kv: kv[1]):
                f.write(f"{token}\t{idx}\n")

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.merges", encoding="utf-8") as f:
            header = f.readline().strip()
            if not header.startswith(f"#{MODEL_FORMAT}"):
                raise ConfigError(f"unrecognized model header: {header!r}")
            fields = dict(kv.split("=", 1) for kv in header.split()[2:])
            marker = fields.get("marker", MARKER)
            target = int(fields.get("vocab_size", 0))
            n_special = int(fields.get("specials", 0))
            merges = []
            for line in f:
                a, b = line.rstrip("\n").split(" ")
                merges.append((a, b))
        vocab = {}
        with open(f"{prefix}.vocab", encoding="utf-8") as f:
            for line in f:
                token, idx = line.rstrip("\n").split("\t")
                vocab[token] = int(idx)
        ordered = sorted(vocab.items(), key=lambda kv: kv[1])
        specials = tuple(tok for tok, _ in ordered[:n_special])
        return cls(merges=merges, vocab=vocab, vocab_size_target=target,
                   special_tokens=specials, marker=marker)


def _count_words(sentences):
    counts = Counter()
    for s in sentences:
        counts.update(s.tokens)
    return counts


def _word_frequencies(mono, finetune, oversample_factor, workers):
    """Frequency table over words; fine-tuning words count ``factor`` times.

    Counting is chunked and merged so the result is identical for any
    worker count (addition commutes).
    """
    if isinstance(mono, dict):
        streams = list(mono.values())
    else:
        streams = [mono]
    sentences = [s for stream in streams for s in stream]
    freqs = Counter()
    if workers > 1 and sentences:
        chunk = max(1, (len(sentences) + workers - 1) // workers)
        parts = [sentences[i:i + chunk] for i in range(0, len(sentences), chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for counted in pool.map(_count_words, parts):
                freqs.update(counted)
    else:
        freqs.update(_count_words(sentences))
    if finetune is not None:
        ft_counts = _count_words(finetune)
        for word, n in ft_counts.items():
            freqs[word] += n * oversample_factor
    return freqs


def _pair_counts(seqs):
    counts = Counter()
    for symbols, freq in seqs:
        for pair in zip(symbols, symbols[1:]):
            counts[pair] += freq
    return counts


def _merge_in_place(seqs, pair):
    a, b = pair
    for idx, (symbols, freq) in enumerate(seqs):
        if a not in symbols:
            continue
        merged = []
        i = 0
        changed = False
        while i < len(symbols):
            if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                merged.append(a + b)
                i += 2
                changed = True
            else:
                merged.append(symbols[i])
                i += 1
        if changed:
            seqs[idx] = (merged, freq)


def learn_bpe(mono, finetune=None, oversample_factor=1, vocab_size=60000,
              languages=DEFAULT_LANGUAGES, workers=1):
    """Learn merge rules from the weighted concatenation of all corpora.

    ``mono`` is an iterable of AnnotatedSentences or a {lang: iterable}
    dict; ``finetune`` sentences are weighted ``oversample_factor``x in
    the frequency table (weighting only — nothing is re-applied at
    segmentation time).  Learning stops once the non-special vocabulary
    reaches ``vocab_size`` entries or no symbol pair occurs twice.
    Equal-frequency pairs are broken lexicographically, so the result is
    bit-identical across runs and worker counts.
    """
    specials = special_tokens(languages)
    if vocab_size < len(specials):
        raise ConfigError(
            f"vocab_size {vocab_size} is smaller than the {len(specials)} reserved tokens"
        )
    if oversample_factor < 1:
        raise ConfigError(f"oversample_factor must be >= 1, got {oversample_factor}")
    freqs = _word_frequencies(mono, finetune, oversample_factor, workers)

    seqs = [(list(word), freq) for word, freq in sorted(freqs.items())]
    units = sorted({c for word in freqs for c in word})
    # Each unit yields two emittable forms (plain and "@@"-marked), both
    # counted against the target.
    merges = []
    while 2 * (len(units) + len(merges) + 1) <= vocab_size:
        counts = _pair_counts(seqs)
        if not counts:
            break
        best_pair, best_count = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best_count < 2:
            break
        merges.append(best_pair)
        _merge_in_place(seqs, best_pair)

    vocab = {tok: i for i, tok in enumerate(specials)}
    next_id = len(specials)
    for unit in units + [a + b for a, b in merges]:
        vocab[unit] = next_id
        vocab[unit + MARKER] = next_id + 1
        next_id += 2
    return SubwordModel(merges=merges, vocab=vocab, vocab_size_target=vocab_size,
                        special_tokens=specials)


def apply_bpe(s, model):
    """Segment a word-level sentence, remapping bunsetsu spans.

    Each word is segmented independently; output spans cover exactly the
    subwords of the words the original spans covered, so the bunsetsu
    count never changes.
    """
    pieces_per_word = [model.segment_word(w) for w in s.tokens]
    tokens = [p for pieces in pieces_per_word for p in pieces]
    spans = []
    if s.bunsetsu:
        starts = [0]
        for pieces in pieces_per_word:
            starts.append(starts[-1] + len(pieces))
        spans = [(starts[b], starts[e]) for b, e in s.bunsetsu]
    return AnnotatedSentence(lang=s.lang, tokens=tokens, bunsetsu=spans)


def detokenize(tokens, model):
    """Undo subword segmentation: glue marked pieces back into words."""
    reserved = set(model.special_tokens)
    words = []
    current = []
    for tok in tokens:
        if tok in reserved:
            raise ValueError(f"special token {tok} cannot be detokenized")
        if tok.endswith(model.marker) and len(tok) > len(model.marker):
            current.append(tok[: -len(model.marker)])
        else:
            current.append(tok)
            words.append("".join(current))
            current = []
    if current:
        # dangling continuation marker at sentence end; emit what we have
        words.append("".join(current))
    return words


class BpeTokenizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper around learn_bpe/apply_bpe.

    fit() learns the merge table, transform() maps word-level sentences
    to subword-level ones, inverse_transform() recovers word sequences
    from subword token lists.
    """

    def __init__(self, vocab_size=60000, oversample_factor=1,
                 languages=DEFAULT_LANGUAGES, workers=1):
        self.vocab_size = vocab_size
        self.oversample_factor = oversample_factor
        self.languages = languages
        self.workers = workers

    def fit(self, X, y=None, finetune=None):
        self.model_ = learn_bpe(
            X,
            finetune=finetune,
            oversample_factor=self.oversample_factor,
            vocab_size=self.vocab_size,
            languages=self.languages,
            workers=self.workers,
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("BpeTokenizer must be fit (or loaded) before use")

    def transform(self, X):
        self._check_fitted()
        return [apply_bpe(s, self.model_) for s in X]

    def inverse_transform(self, X):
        self._check_fitted()
        return [detokenize(tokens, self.model_) for tokens in X]

    def save(self, prefix):
        self._check_fitted()
        self.model_.save(prefix)

    @classmethod
    def from_file(cls, prefix):
        tok = cls()
        tok.model_ = SubwordModel.load(prefix)
        tok.vocab_size = tok.model_.vocab_size_target
        return tok
