"""Corpus BLEU and paired bootstrap significance testing.

BLEU is the standard corpus-level formulation: geometric mean of clipped
n-gram precisions (n = 1..4) times the brevity penalty, unsmoothed by
default so a corpus with no 4-gram match scores 0.  The significance
test resamples sentences with replacement and reports how often the
claimed-better system fails to beat the baseline (ties favor the null).
"""

from collections import Counter
from dataclasses import dataclass
from math import exp, log

from .tokens import seeded_rng


@dataclass
class EvalCorpus:
    """Aligned hypothesis/reference token sequences (one reference each)."""

    hypotheses: list
    references: list

    def __post_init__(self):
        if len(self.hypotheses) != len(self.references):
            raise ValueError(
                f"{len(self.hypotheses)} hypotheses vs {len(self.references)} references")
        if not self.hypotheses:
            raise ValueError("evaluation corpus is empty")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp, ref, max_n=4):
    """Sufficient statistics of one sentence pair for corpus BLEU:
    (clipped matches per n, hypothesis n-gram totals per n, hyp length,
    ref length).  Corpus BLEU is additive over these."""
    matches = []
    totals = []
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        matches.append(sum(min(c, ref_counts[g]) for g, c in hyp_counts.items()))
        totals.append(max(0, len(hyp) - n + 1))
    return matches, totals, len(hyp), len(ref)


def corpus_stats(corpus, max_n=4):
    return [sentence_stats(h, r, max_n) for h, r in zip(corpus.hypotheses, corpus.references)]


def bleu_from_stats(stats, max_n=4, smooth=False):
    """Combine per-sentence statistics into a 0-100 corpus score."""
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for m, t, hl, rl in stats:
        for n in range(max_n):
            matches[n] += m[n]
            totals[n] += t[n]
        hyp_len += hl
        ref_len += rl
    log_precisions = []
    for n in range(max_n):
        m, t = matches[n], totals[n]
        if smooth and n > 0:
            # add-one smoothing on the higher-order counts only
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_precisions.append(log(m / t))
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * exp(sum(log_precisions) / max_n)


def bleu(corpus, max_n=4, smooth=False):
    """Corpus BLEU in [0, 100]; identical corpora score exactly 100."""
    return bleu_from_stats(corpus_stats(corpus, max_n), max_n, smooth)


def bootstrap_significance(a, b, samples=1000, seed=0, max_n=4, smooth=False):
    """One-sided paired bootstrap: p-value for "system b beats system a".

    Sentence indices are resampled with replacement ``samples`` times;
    the p-value is the fraction of resamples where b's BLEU <= a's
    (ties count against the claim).  Each resample's index draw is
    derived from (seed, sample index), so results are independent of
    any parallel evaluation order.
    """
    if len(a.hypotheses) != len(b.hypotheses):
        raise ValueError("systems have different sentence counts")
    for ra, rb in zip(a.references, b.references):
        if list(ra) != list(rb):
            raise ValueError("systems must share the same references")
    if samples < 1:
        raise ValueError("samples must be positive")
    stats_a = corpus_stats(a, max_n)
    stats_b = corpus_stats(b, max_n)
    n = len(stats_a)
    null_wins = 0
    for k in range(samples):
        rng = seeded_rng(seed, "resample", k)
        idx = [rng.randrange(n) for _ in range(n)]
        score_a = bleu_from_stats([stats_a[i] for i in idx], max_n, smooth)
        score_b = bleu_from_stats([stats_b[i] for i in idx], max_n, smooth)
        if score_b <= score_a:
            null_wins += 1
    return null_wins / samples
