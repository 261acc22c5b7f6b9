"""Multi-task shard construction.

Pairs from several (task, language) components are tagged, drawn by
weighted sampling and written to TSV shards whose internal order is a
seeded permutation, so any slice of a shard mixes objectives the way a
mini-batch should.  The draw sequence depends only on (global seed,
schedule), never on worker count.

Shard line format (UTF-8 TSV, one record per line):

    task-token <TAB> lang-token <TAB> enc tokens <TAB> dec tokens <TAB> loss positions

The encoder column holds the sentence part only; the full encoder input
is [task-token, lang-token] + enc tokens.  Loss positions index the
decoder target, which is never tagged.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .objectives import TrainingPair
from .tokens import DEFAULT_LANGUAGES, TASK_TOKENS, VALID_TASKS, lang_token, seeded_rng

logger = logging.getLogger(__name__)

_TASK_FROM_TOKEN = {tok: task for task, tok in TASK_TOKENS.items()}

SHARD_PATTERN = "shard-{:05d}.tsv"
MANIFEST_NAME = "manifest.json"


@dataclass
class TaggedPair:
    """A TrainingPair whose encoder input carries [task][lang] tokens.

    ``enc_input`` includes the two tag tokens; ``dec_target`` and
    ``loss_positions`` are untouched.
    """

    task: str
    lang: str
    enc_input: list
    dec_target: list
    loss_positions: frozenset

    @property
    def task_token(self):
        return self.enc_input[0]

    @property
    def lang_token(self):
        return self.enc_input[1]


@dataclass
class MixSchedule:
    """Which (task, lang) components to mix, at what weights."""

    components: list
    shard_size: int = 1000
    global_seed: int = 0
    on_exhaust: str = "stop"

    def __post_init__(self):
        if not self.components:
            raise ConfigError("schedule needs at least one component")
        seen = set()
        for task, lang, weight in self.components:
            if task not in VALID_TASKS:
                raise ConfigError(f"unknown task {task!r}")
            if weight <= 0:
                raise ConfigError(f"component {task}:{lang} has non-positive weight {weight}")
            if (task, lang) in seen:
                raise ConfigError(f"duplicate component {task}:{lang}")
            seen.add((task, lang))
        if self.shard_size < 1:
            raise ConfigError(f"shard_size must be positive, got {self.shard_size}")
        if self.on_exhaust not in ("stop", "wrap"):
            raise ConfigError(f"on_exhaust must be 'stop' or 'wrap', got {self.on_exhaust!r}")


def tag_pair(pair, languages=DEFAULT_LANGUAGES):
    """Prepend the task and language tokens to the encoder input."""
    if pair.lang not in languages:
        raise ConfigError(
            f"language {pair.lang!r} is not configured (known: {', '.join(languages)})"
        )
    return TaggedPair(
        task=pair.task,
        lang=pair.lang,
        enc_input=[TASK_TOKENS[pair.task], lang_token(pair.lang)] + list(pair.enc_input),
        dec_target=list(pair.dec_target),
        loss_positions=frozenset(pair.loss_positions),
    )


def format_shard_line(tp):
    enc_body = tp.enc_input[2:]
    loss = ",".join(str(i) for i in sorted(tp.loss_positions))
    return "\t".join([tp.task_token, tp.lang_token,
                      " ".join(enc_body), " ".join(tp.dec_target), loss])


def parse_shard_line(line):
    cols = line.rstrip("\n").split("\t")
    if len(cols) != 5:
        raise ValueError(f"expected 5 tab-separated columns, got {len(cols)}")
    task_token, ltoken, enc_body, dec, loss = cols
    task = _TASK_FROM_TOKEN.get(task_token)
    if task is None:
        raise ValueError(f"unknown task token {task_token!r}")
    return TaggedPair(
        task=task,
        lang=ltoken[1:-1].lower(),
        enc_input=[task_token, ltoken] + enc_body.split(),
        dec_target=dec.split(),
        loss_positions=frozenset(int(i) for i in loss.split(",") if i != ""),
    )


def read_shard(path):
    with open(path, encoding="utf-8") as f:
        return [parse_shard_line(line) for line in f if line.strip()]


def _draw_order(sizes, weights, on_exhaust, rng):
    """Sequence of component indices for one epoch pass.

    Under "stop" the epoch ends at the first draw hitting an exhausted
    component; under "wrap" exhausted components recycle until the total
    number of draws equals the total pair count.
    """
    n = len(sizes)
    remaining = list(sizes)
    total = sum(sizes)
    order = []
    indices = list(range(n))
    while len(order) < total:
        i = rng.choices(indices, weights=weights)[0]
        if remaining[i] == 0:
            if on_exhaust == "stop":
                dropped = sum(remaining)
                if dropped:
                    logger.warning(
                        "component %d exhausted; stopping epoch with %d pairs undrawn",
                        i, dropped)
                break
            remaining[i] = sizes[i]
        remaining[i] -= 1
        order.append(i)
    return order


def build_shards(sources, schedule, out_dir):
    """Mix tagged pair streams into shard files.

    ``sources`` is one pair stream per schedule component, in component
    order; plain TrainingPairs are tagged on the way in.  Returns the
    list of shard paths.  Identical (sources, schedule) always produce
    identical files: the draw order comes from the global seed and each
    shard's internal shuffle from (global seed, shard index).
    """
    if len(sources) != len(schedule.components):
        raise ConfigError(
            f"{len(sources)} sources for {len(schedule.components)} components")
    streams = []
    for src, (task, lang, _) in zip(sources, schedule.components):
        pairs = [p if isinstance(p, TaggedPair) else tag_pair(p) for p in src]
        for p in pairs:
            if p.task != task or p.lang != lang:
                raise ConfigError(
                    f"pair tagged {p.task}:{p.lang} fed to component {task}:{lang}")
        if not pairs:
            raise ConfigError(f"component {task}:{lang} has an empty stream")
        streams.append(pairs)

    weights = [w for _, _, w in schedule.components]
    order = _draw_order([len(s) for s in streams], weights,
                        schedule.on_exhaust, seeded_rng(schedule.global_seed, "draw"))

    cursors = [0] * len(streams)
    records = []
    for i in order:
        stream = streams[i]
        records.append(stream[cursors[i] % len(stream)])
        cursors[i] += 1

    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = []
    for shard_idx in range(0, max(1, (len(records) + schedule.shard_size - 1) // schedule.shard_size)):
        chunk = records[shard_idx * schedule.shard_size:(shard_idx + 1) * schedule.shard_size]
        seeded_rng(schedule.global_seed, "shard", shard_idx).shuffle(chunk)
        path = out / SHARD_PATTERN.format(shard_idx)
        with open(path, "w", encoding="utf-8") as f:
            for tp in chunk:
                f.write(format_shard_line(tp) + "\n")
        paths.append(str(path))

    manifest = {
        "format": "jaseq-shards v1",
        "global_seed": schedule.global_seed,
        "shard_size": schedule.shard_size,
        "on_exhaust": schedule.on_exhaust,
        "components": [
            {"task": t, "lang": l, "weight": w, "available": len(s), "drawn": c}
            for (t, l, w), s, c in zip(schedule.components, streams, cursors)
        ],
        "records": len(records),
        "shards": [os.path.basename(p) for p in paths],
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
    return paths


def sample_stats(shard_paths):
    """Exact per-shard record counts keyed by (task token, lang token)."""
    stats = []
    for path in shard_paths:
        counts = {}
        for tp in read_shard(path):
            key = (tp.task_token, tp.lang_token)
            counts[key] = counts.get(key, 0) + 1
        stats.append({"shard": os.path.basename(str(path)), "counts": counts})
    return stats
