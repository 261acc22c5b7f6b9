"""Training-pair generation for the masking and reordering objectives.

Three objectives over monolingual text:

* MASS masks a random consecutive token span; the decoder reconstructs
  the masked tokens given the rest.
* BMASS masks whole bunsetsus instead of arbitrary spans, so every mask
  boundary is a syntactic boundary.
* BRSS pairs a sentence with its chunk-wise bunsetsu-reversed form
  (direction F trains reordered->original, R the opposite), which
  roughly turns SOV Japanese into an SVO-ordered pseudo-sentence.

All sampling is driven by a per-sentence seed derived from (global seed,
corpus index), so output is independent of how work is partitioned.
"""

from dataclasses import dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import AnnotatedSentence
from .errors import AnnotationRequired
from .tokens import MASK, TASK_BMASS, TASK_BRSS, TASK_MASS, seeded_rng

DEFAULT_PUNCTUATION = ("。", "、", "，", "．", "！", "？", ",", ".", "!", "?")
DEFAULT_TOPIC_PARTICLE = "は"


@dataclass(frozen=True)
class SpanMask:
    """Sorted, non-overlapping half-open token spans to be masked."""

    spans: tuple

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple((int(a), int(b)) for a, b in self.spans))

    def positions(self):
        return frozenset(i for a, b in self.spans for i in range(a, b))

    def check(self, n_tokens):
        prev = -1
        for a, b in self.spans:
            if a >= b:
                raise ValueError(f"empty mask span [{a}, {b})")
            if a < prev:
                raise ValueError("mask spans overlap or are unsorted")
            if b > n_tokens:
                raise ValueError(f"mask span [{a}, {b}) exceeds sentence length {n_tokens}")
            prev = b


@dataclass
class TrainingPair:
    """One (encoder input, decoder target) example.

    For MASS/BMASS the two sides are complementary maskings of the same
    sentence and loss_positions are the masked indices; for BRSS both
    sides are unmasked and every target position carries loss.
    """

    task: str
    lang: str
    enc_input: list
    dec_target: list
    loss_positions: frozenset


@dataclass
class ReorderConfig:
    """Chunking signals for bunsetsu reordering."""

    punctuation_set: frozenset = frozenset(DEFAULT_PUNCTUATION)
    topic_particle: str = DEFAULT_TOPIC_PARTICLE
    topic_signal_enabled: bool = True

    def __post_init__(self):
        self.punctuation_set = frozenset(self.punctuation_set)
        if not self.punctuation_set:
            raise ValueError("punctuation_set must not be empty")


def _round_half_up(x):
    import math

    return int(math.floor(x + 0.5))


def sample_mass_mask(length, mask_ratio=0.5, rng_seed=0, spans=1):
    """Draw a random mask of ``spans`` consecutive runs totalling
    round(mask_ratio * length) tokens (minimum 1).

    With the default single span, the start is uniform over all valid
    starts; with several spans the gap layout is uniform over all
    non-overlapping placements.  Deterministic in ``rng_seed``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if not 0.0 < mask_ratio <= 1.0:
        raise ValueError(f"mask_ratio must be in (0, 1], got {mask_ratio}")
    total = min(length, max(1, _round_half_up(mask_ratio * length)))
    k = max(1, min(spans, total))
    base, rem = divmod(total, k)
    lengths = [base + 1] * rem + [base] * (k - rem)
    free = length - total
    rng = seeded_rng(rng_seed)
    cuts = sorted(rng.sample(range(free + k), k))
    out = []
    pos = 0
    prev_gap_total = 0
    for i, span_len in enumerate(lengths):
        gap_total = cuts[i] - i
        pos += gap_total - prev_gap_total
        prev_gap_total = gap_total
        out.append((pos, pos + span_len))
        pos += span_len
    return SpanMask(spans=tuple(out))


def sample_bunsetsu_mask(s, bunsetsu_fraction=0.5, rng_seed=0):
    """Pick max(1, round(fraction * n)) bunsetsus uniformly without
    replacement and return their token spans, merging adjacent ones.
    """
    if not 0.0 < bunsetsu_fraction <= 1.0:
        raise ValueError(f"bunsetsu_fraction must be in (0, 1], got {bunsetsu_fraction}")
    if not s.bunsetsu:
        raise AnnotationRequired("sentence has no bunsetsu annotation")
    n = len(s.bunsetsu)
    k = min(n, max(1, _round_half_up(bunsetsu_fraction * n)))
    rng = seeded_rng(rng_seed)
    chosen = sorted(rng.sample(range(n), k))
    merged = []
    for idx in chosen:
        start, end = s.bunsetsu[idx]
        if merged and merged[-1][1] == start:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return SpanMask(spans=tuple(merged))


def make_masked_pair(s, mask, task):
    """Build complementary encoder/decoder sequences from a span mask.

    Masked positions become [M] on the encoder side and survive on the
    decoder side; unmasked positions do the opposite.  Overlaying the
    two sides therefore reconstructs the sentence exactly.
    """
    if task not in (TASK_MASS, TASK_BMASS):
        raise ValueError(f"task must be MASS or BMASS, got {task!r}")
    mask.check(len(s.tokens))
    loss = mask.positions()
    enc = [MASK if i in loss else tok for i, tok in enumerate(s.tokens)]
    dec = [tok if i in loss else MASK for i, tok in enumerate(s.tokens)]
    return TrainingPair(task=task, lang=s.lang, enc_input=enc, dec_target=dec,
                        loss_positions=loss)


def _split_units(s, cfg):
    """Decompose bunsetsus into reorderable bodies and punctuation anchors.

    The maximal trailing punctuation run of each bunsetsu is detached as
    an anchor (a bunsetsu that is all punctuation becomes a standalone
    anchor); punctuation elsewhere inside a bunsetsu stays put.  Anchors
    remember whether they were attached, so output spans can be rebuilt
    without changing the bunsetsu count.
    """
    units = []
    for tokens in s.bunsetsu_tokens():
        cut = len(tokens)
        while cut > 0 and tokens[cut - 1] in cfg.punctuation_set:
            cut -= 1
        body, trail = tokens[:cut], tokens[cut:]
        if body:
            topic = cfg.topic_signal_enabled and body[-1] == cfg.topic_particle
            units.append(("body", body, topic))
        if trail:
            units.append(("anchor", trail, not body))
    return units


def reorder_bunsetsu(s, cfg=None):
    """Chunk-wise bunsetsu reversal.

    The bunsetsu sequence is cut after every topic-particle bunsetsu and
    after every punctuation anchor; within each chunk the bunsetsus are
    reversed while the anchor keeps its chunk-final position.  Token
    multiset and bunsetsu count are preserved.  On sentences without a
    topic-particle signal the operation is an involution.
    """
    if not s.bunsetsu:
        raise AnnotationRequired("sentence has no bunsetsu annotation")
    cfg = cfg or ReorderConfig()

    chunks = []
    current = []
    for unit in _split_units(s, cfg):
        current.append(unit)
        kind, _, flag = unit
        if kind == "anchor" or (kind == "body" and flag):
            chunks.append(current)
            current = []
    if current:
        chunks.append(current)

    out_tokens = []
    out_spans = []
    for chunk in chunks:
        bodies = [u for u in chunk if u[0] == "body"]
        anchors = [u for u in chunk if u[0] == "anchor"]
        for _, tokens, _ in reversed(bodies):
            out_spans.append((len(out_tokens), len(out_tokens) + len(tokens)))
            out_tokens.extend(tokens)
        for _, tokens, standalone in anchors:
            if standalone or not out_spans:
                out_spans.append((len(out_tokens), len(out_tokens) + len(tokens)))
            else:
                start, _ = out_spans[-1]
                out_spans[-1] = (start, len(out_tokens) + len(tokens))
            out_tokens.extend(tokens)
    return AnnotatedSentence(lang=s.lang, tokens=out_tokens, bunsetsu=out_spans)


def make_brss_pair(s, cfg=None, direction="F"):
    """Pair a sentence with its reordered form.

    Direction F presents the reordered tokens to the encoder and trains
    the decoder to emit the original order; direction R swaps the sides.
    Every target position carries loss.
    """
    if direction not in ("F", "R"):
        raise ValueError(f"direction must be 'F' or 'R', got {direction!r}")
    reordered = reorder_bunsetsu(s, cfg)
    if direction == "F":
        enc, dec = reordered.tokens, list(s.tokens)
    else:
        enc, dec = list(s.tokens), reordered.tokens
    return TrainingPair(task=TASK_BRSS, lang=s.lang, enc_input=list(enc),
                        dec_target=list(dec),
                        loss_positions=frozenset(range(len(dec))))


class _PairGenerator(BaseEstimator, TransformerMixin):
    """Stateless transformer base: sentences in, TrainingPairs out."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [self._make(s, i) for i, s in enumerate(X, start=getattr(self, "index_offset", 0))]


class MassPairGenerator(_PairGenerator):
    """Random-span masking pairs (language agnostic)."""

    def __init__(self, mask_ratio=0.5, spans=1, seed=0, index_offset=0):
        self.mask_ratio = mask_ratio
        self.spans = spans
        self.seed = seed
        self.index_offset = index_offset

    def _make(self, s, index):
        mask = sample_mass_mask(len(s.tokens), mask_ratio=self.mask_ratio,
                                rng_seed=f"{self.seed}:{index}", spans=self.spans)
        return make_masked_pair(s, mask, TASK_MASS)


class BunsetsuMassPairGenerator(_PairGenerator):
    """Whole-bunsetsu masking pairs (requires annotation)."""

    def __init__(self, bunsetsu_fraction=0.5, seed=0, index_offset=0):
        self.bunsetsu_fraction = bunsetsu_fraction
        self.seed = seed
        self.index_offset = index_offset

    def _make(self, s, index):
        mask = sample_bunsetsu_mask(s, bunsetsu_fraction=self.bunsetsu_fraction,
                                    rng_seed=f"{self.seed}:{index}")
        return make_masked_pair(s, mask, TASK_BMASS)


class ReorderPairGenerator(_PairGenerator):
    """Reordering pairs; deterministic, no seed involved."""

    def __init__(self, direction="F", config=None, index_offset=0):
        self.direction = direction
        self.config = config
        self.index_offset = index_offset

    def _make(self, s, index):
        return make_brss_pair(s, cfg=self.config, direction=self.direction)
