"""Reserved token inventory and seeded RNG helpers.

Every reserved string lives here so that corpus validation, the subword
vocabulary and the training pipeline agree on what a "special token" is.
"""

import random

MASK = "[M]"
PAD = "[PAD]"
UNK = "[UNK]"
BOS = "[BOS]"
EOS = "[EOS]"

TASK_MASS = "MASS"
TASK_BMASS = "BMASS"
TASK_BRSS = "BRSS"
VALID_TASKS = (TASK_MASS, TASK_BMASS, TASK_BRSS)

# Task tokens as they appear on encoder inputs and in shard files.  The
# reordering task is tagged [RSS] regardless of direction.
TASK_TOKENS = {
    TASK_MASS: "[MASS]",
    TASK_BMASS: "[BMASS]",
    TASK_BRSS: "[RSS]",
}

DEFAULT_LANGUAGES = ("ja", "en", "ru")


def lang_token(lang):
    """Map a language code to its reserved token, e.g. "ja" -> "[Ja]"."""
    if not lang or not lang.isalnum():
        raise ValueError(f"bad language code: {lang!r}")
    return f"[{lang[:1].upper()}{lang[1:]}]"


def special_tokens(languages=DEFAULT_LANGUAGES):
    """Full reserved inventory, in fixed id order.

    Ids of special tokens precede every learned subword id, so the order
    here is part of the vocabulary file format.
    """
    base = [PAD, UNK, BOS, EOS, MASK]
    base += [TASK_TOKENS[t] for t in VALID_TASKS]
    base += [lang_token(code) for code in languages]
    return tuple(base)


def seeded_rng(*parts):
    """Deterministic stdlib RNG derived from any mix of ints/strings.

    String seeding in `random.Random` hashes via sha512, which is stable
    across interpreter runs and platforms (unlike `hash()` on str).  All
    per-sentence / per-shard / per-sample generators are derived this way
    so results never depend on worker count or iteration order.
    """
    return random.Random(":".join(str(p) for p in parts))
