"""A deliberately tiny encoder-decoder for verifying training objectives.

One tanh-RNN encoder layer, one tanh-RNN decoder layer with bilinear
attention over encoder states, shared embeddings, greedy decoding.  All
math is float64 numpy with hand-written backprop so that gradients can
be checked against central finite differences, and every run is
bit-reproducible from its seed.  This exists to verify that the
generated training pairs are learnable, not to be a competitive model.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, TrainingDiverged, VocabMismatch
from .objectives import TrainingPair
from .subword import apply_bpe, vocab_fingerprint
from .tokens import BOS, EOS, UNK, lang_token, seeded_rng, special_tokens

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "jaseq-ckpt v1"
FINETUNE_TASK = "FT"


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    max_steps: int = 1000
    batch_size: int = 16
    seed: int = 0
    patience: int = 5
    checkpoint_interval: int = 100
    dev_metric: str = "accuracy"  # accuracy | loss | bleu

    def __post_init__(self):
        if self.learning_rate < 0 or self.max_steps < 0:
            raise ConfigError("learning_rate and max_steps must be non-negative")
        if self.batch_size < 1 or self.patience < 1 or self.checkpoint_interval < 1:
            raise ConfigError("batch_size, patience and checkpoint_interval must be positive")
        if self.dev_metric not in ("accuracy", "loss", "bleu"):
            raise ConfigError(f"unknown dev_metric {self.dev_metric!r}")


def build_vocab(token_iterables, languages=None):
    """Id map over special tokens plus every token seen, sorted."""
    langs = languages if languages is not None else ("ja", "en", "ru")
    specials = special_tokens(langs)
    seen = set()
    for tokens in token_iterables:
        seen.update(tokens)
    vocab = {tok: i for i, tok in enumerate(specials)}
    for tok in sorted(seen - set(specials)):
        vocab[tok] = len(vocab)
    return vocab


class TinyModel:
    """Parameter container plus forward/backward passes.

    Attention values are the concatenation of encoder state and input
    embedding, so copying a source token is close to a linear readout;
    learned position embeddings disambiguate repeated tokens.
    """

    def __init__(self, vocab, embed_dim=32, hidden_dim=32, seed=0, init_scale=0.1,
                 max_positions=160):
        if embed_dim < 1 or hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be positive")
        self.vocab = dict(vocab)
        self.inv_vocab = {i: t for t, i in self.vocab.items()}
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.seed = seed
        self.init_scale = init_scale
        self.max_positions = max_positions
        V, d, h = len(vocab), embed_dim, hidden_dim
        rng = np.random.default_rng(seed)

        def init(*shape):
            return rng.normal(0.0, init_scale, size=shape)

        self.params = {
            "emb": init(V, d),
            "pos": init(max_positions, d),
            "enc_wx": init(d, h),
            "enc_wh": init(h, h),
            "enc_b": np.zeros(h),
            "dec_wx": init(d, h),
            "dec_wh": init(h, h),
            "dec_b": np.zeros(h),
            "att_w": init(h, h),
            "out_w": init(2 * h + d, V),
            "out_b": np.zeros(V),
        }
        logger.info("TinyModel: vocab=%d embed=%d hidden=%d params=%d",
                    V, d, h, self.n_params())

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    def set_params_(self, params):
        for k in self.params:
            self.params[k] = params[k].copy()

    def clone(self):
        m = TinyModel.__new__(TinyModel)
        m.vocab = dict(self.vocab)
        m.inv_vocab = dict(self.inv_vocab)
        m.embed_dim = self.embed_dim
        m.hidden_dim = self.hidden_dim
        m.seed = self.seed
        m.init_scale = self.init_scale
        m.max_positions = self.max_positions
        m.params = self.copy_params()
        return m

    def encode_tokens(self, tokens):
        unk = self.vocab[UNK]
        return np.array([self.vocab.get(t, unk) for t in tokens], dtype=np.int64)

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("empty id sequence")
        if ids.min() < 0 or ids.max() >= len(self.vocab):
            raise ValueError(f"token id out of range [0, {len(self.vocab)})")
        if ids.size > self.max_positions:
            raise ValueError(
                f"sequence length {ids.size} exceeds max_positions={self.max_positions}")
        return ids

    def _run(self, enc_ids, dec_ids):
        """Forward pass keeping every intermediate for backprop."""
        p = self.params
        Te, Td = len(enc_ids), len(dec_ids)
        h = self.hidden_dim

        X = p["emb"][enc_ids] + p["pos"][:Te]       # (Te, d)
        H = np.zeros((Te, h))
        prev = np.zeros(h)
        for j in range(Te):
            prev = np.tanh(X[j] @ p["enc_wx"] + prev @ p["enc_wh"] + p["enc_b"])
            H[j] = prev
        P = H @ p["att_w"]                          # (Te, h) projected for scoring
        V_att = np.concatenate([H, X], axis=1)      # attention values (Te, h + d)

        Y = p["emb"][dec_ids] + p["pos"][:Td]       # (Td, d)
        S = np.zeros((Td, h))
        A = np.zeros((Td, Te))                      # attention weights
        C = np.zeros((Td, h + self.embed_dim))      # context vectors
        logits = np.zeros((Td, len(self.vocab)))
        sprev = H[-1]                               # decoder starts from final encoder state
        for t in range(Td):
            st = np.tanh(Y[t] @ p["dec_wx"] + sprev @ p["dec_wh"] + p["dec_b"])
            scores = P @ st
            scores -= scores.max()
            e = np.exp(scores)
            alpha = e / e.sum()
            ct = alpha @ V_att
            z = np.concatenate([st, ct])
            logits[t] = z @ p["out_w"] + p["out_b"]
            S[t], A[t], C[t] = st, alpha, ct
            sprev = st
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return {"X": X, "H": H, "P": P, "V_att": V_att, "Y": Y, "S": S, "A": A,
                "C": C, "probs": probs, "enc_ids": enc_ids, "dec_ids": dec_ids}

    def forward(self, enc_ids, dec_ids):
        """Per-position output distributions; each row sums to 1."""
        enc_ids = self._check_ids(enc_ids)
        dec_ids = self._check_ids(dec_ids)
        return self._run(enc_ids, dec_ids)["probs"]

    def _backward(self, cache, dlogits, grads):
        """Accumulate parameter gradients given d(loss)/d(logits)."""
        p = self.params
        h = self.hidden_dim
        X, H, P, V_att = cache["X"], cache["H"], cache["P"], cache["V_att"]
        Y, S, A, C = cache["Y"], cache["S"], cache["A"], cache["C"]
        enc_ids, dec_ids = cache["enc_ids"], cache["dec_ids"]
        Te, Td = len(enc_ids), len(dec_ids)

        dH = np.zeros_like(H)
        dX = np.zeros_like(X)
        dP = np.zeros_like(P)
        dsnext = np.zeros(h)
        for t in range(Td - 1, -1, -1):
            dl = dlogits[t]
            st, alpha = S[t], A[t]
            z = np.concatenate([st, C[t]])
            grads["out_w"] += np.outer(z, dl)
            grads["out_b"] += dl
            dz = p["out_w"] @ dl
            ds = dz[:h] + dsnext
            dc = dz[h:]
            # context: c = alpha @ [H; X]
            dalpha = V_att @ dc
            dH += np.outer(alpha, dc[:h])
            dX += np.outer(alpha, dc[h:])
            # softmax over attention scores
            dscores = alpha * (dalpha - alpha @ dalpha)
            # scores = P @ s
            dP += np.outer(dscores, st)
            ds += P.T @ dscores
            # decoder cell: s = tanh(y W + s_prev U + b)
            db = ds * (1.0 - st * st)
            sprev = S[t - 1] if t > 0 else H[-1]
            grads["dec_wx"] += np.outer(Y[t], db)
            grads["dec_wh"] += np.outer(sprev, db)
            grads["dec_b"] += db
            dy = p["dec_wx"] @ db
            grads["emb"][dec_ids[t]] += dy
            grads["pos"][t] += dy
            dsnext = p["dec_wh"] @ db
        # decoder initial state was the final encoder state
        dH[-1] += dsnext
        dH += dP @ p["att_w"].T
        grads["att_w"] += H.T @ dP

        dhnext = np.zeros(h)
        for j in range(Te - 1, -1, -1):
            dh = dH[j] + dhnext
            da = dh * (1.0 - H[j] * H[j])
            hprev = H[j - 1] if j > 0 else np.zeros(h)
            grads["enc_wx"] += np.outer(X[j], da)
            grads["enc_wh"] += np.outer(hprev, da)
            grads["enc_b"] += da
            dX[j] += p["enc_wx"] @ da
            dhnext = p["enc_wh"] @ da
        for j in range(Te):
            grads["emb"][enc_ids[j]] += dX[j]
            grads["pos"][j] += dX[j]

    def example_ids(self, pair):
        """(enc ids, teacher-forced decoder input ids, target ids, loss index array)."""
        enc_ids = self._check_ids(self.encode_tokens(pair.enc_input))
        tgt_ids = self._check_ids(self.encode_tokens(pair.dec_target))
        dec_in = np.concatenate([[self.vocab[BOS]], tgt_ids[:-1]])
        loss_idx = np.array(sorted(pair.loss_positions), dtype=np.int64)
        if loss_idx.size == 0:
            raise ValueError("pair has no loss positions (degenerate)")
        if loss_idx.min() < 0 or loss_idx.max() >= len(tgt_ids):
            raise ValueError("loss position outside decoder target")
        return enc_ids, dec_in, tgt_ids, loss_idx

    def masked_nll(self, pair):
        """Negative log-likelihood summed over the pair's loss positions.

        Positions outside loss_positions contribute exactly zero: their
        logits never enter the sum and receive no gradient.
        """
        enc_ids, dec_in, tgt_ids, loss_idx = self.example_ids(pair)
        probs = self._run(enc_ids, dec_in)["probs"]
        return float(-np.log(probs[loss_idx, tgt_ids[loss_idx]]).sum())

    def loss_and_grads(self, pairs):
        """Mean per-loss-position NLL over a batch, with gradients.

        The normalizer (total loss positions in the batch) keeps the
        learning-rate scale independent of mask sizes.
        """
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        encoded = [self.example_ids(p) for p in pairs]
        total_positions = sum(len(e[3]) for e in encoded)
        total_nll = 0.0
        for enc_ids, dec_in, tgt_ids, loss_idx in encoded:
            cache = self._run(enc_ids, dec_in)
            probs = cache["probs"]
            total_nll += -np.log(probs[loss_idx, tgt_ids[loss_idx]]).sum()
            dlogits = np.zeros_like(probs)
            dlogits[loss_idx] = probs[loss_idx]
            dlogits[loss_idx, tgt_ids[loss_idx]] -= 1.0
            dlogits /= total_positions
            self._backward(cache, dlogits, grads)
        return float(total_nll / total_positions), grads

    def greedy_decode(self, enc_tokens, max_len=80):
        """Greedy autoregressive decode; stops at [EOS] (not emitted)."""
        enc_ids = self._check_ids(self.encode_tokens(enc_tokens))
        bos, eos = self.vocab[BOS], self.vocab[EOS]
        out = []
        dec_in = [bos]
        for _ in range(max_len):
            probs = self._run(enc_ids, np.array(dec_in, dtype=np.int64))["probs"]
            nxt = int(np.argmax(probs[-1]))
            if nxt == eos:
                break
            out.append(nxt)
            dec_in.append(nxt)
        return [self.inv_vocab[i] for i in out]

    def save(self, path):
        meta = {
            "format": CHECKPOINT_FORMAT,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "seed": self.seed,
            "init_scale": self.init_scale,
            "max_positions": self.max_positions,
            "vocab_hash": vocab_fingerprint(self.vocab),
            "vocab": self.vocab,
        }
        np.savez(path, meta=json.dumps(meta, ensure_ascii=False),
                 **{f"param_{k}": v for k, v in self.params.items()})

    @classmethod
    def load(cls, path):
        data = np.load(path if str(path).endswith(".npz") else f"{path}.npz",
                       allow_pickle=False)
        meta = json.loads(data["meta"].item())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"unrecognized checkpoint format: {meta.get('format')!r}")
        m = cls(meta["vocab"], embed_dim=meta["embed_dim"], hidden_dim=meta["hidden_dim"],
                seed=meta["seed"], init_scale=meta["init_scale"],
                max_positions=meta["max_positions"])
        for k in m.params:
            m.params[k] = data[f"param_{k}"]
        return m


def unigram_accuracy(model, pairs):
    """Fraction of loss positions where the argmax equals the target,
    micro-averaged (position-weighted) over the whole collection."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty evaluation set")
    hits = 0
    total = 0
    for pair in pairs:
        enc_ids, dec_in, tgt_ids, loss_idx = model.example_ids(pair)
        probs = model._run(enc_ids, dec_in)["probs"]
        pred = probs[loss_idx].argmax(axis=1)
        hits += int((pred == tgt_ids[loss_idx]).sum())
        total += len(loss_idx)
    return hits / total


def mean_masked_nll(model, pairs):
    pairs = list(pairs)
    total = 0.0
    positions = 0
    for pair in pairs:
        total += model.masked_nll(pair)
        positions += len(pair.loss_positions)
    return total / max(1, positions)


def _dev_bleu(model, pairs):
    # subword-level BLEU against the decoder targets; a cheap proxy that
    # is monotone in translation quality for checkpoint selection
    from .metrics import EvalCorpus, bleu

    hyps = [model.greedy_decode(p.enc_input) for p in pairs]
    refs = [[t for t in p.dec_target if t != EOS] for p in pairs]
    return bleu(EvalCorpus(hypotheses=hyps, references=refs), smooth=True)


def evaluate(model, pairs, metric):
    if metric == "accuracy":
        return unigram_accuracy(model, pairs)
    if metric == "loss":
        return mean_masked_nll(model, pairs)
    if metric == "bleu":
        return _dev_bleu(model, pairs)
    raise ConfigError(f"unknown dev metric {metric!r}")


def _improved(value, best, metric):
    if best is None:
        return True
    return value < best if metric == "loss" else value > best


def train(model, pairs, cfg, dev_pairs=None):
    """Seeded mini-batch gradient descent on the masked NLL.

    Checkpoints every ``cfg.checkpoint_interval`` steps, tracks the best
    dev metric and stops early after ``cfg.patience`` checkpoints with
    no improvement.  Returns (model restored to the best checkpoint,
    checkpoint log).  Raises TrainingDiverged on NaN/inf loss.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no training pairs")
    dev = list(dev_pairs) if dev_pairs is not None else pairs
    log = []
    best_params = model.copy_params()
    best_value = None
    best_step = 0
    since_improved = 0
    loss_acc = []
    order = []
    epoch = 0
    step = 0
    while step < cfg.max_steps:
        if len(order) < cfg.batch_size:
            fresh = list(range(len(pairs)))
            seeded_rng(cfg.seed, "epoch", epoch).shuffle(fresh)
            order.extend(fresh)
            epoch += 1
        batch_idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
        loss, grads = model.loss_and_grads([pairs[i] for i in batch_idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"loss became {loss} at step {step + 1}; try a lower learning rate")
        for k in model.params:
            model.params[k] -= cfg.learning_rate * grads[k]
        loss_acc.append(loss)
        step += 1
        if step % cfg.checkpoint_interval == 0 or step == cfg.max_steps:
            dev_value = evaluate(model, dev, cfg.dev_metric)
            train_loss = float(np.mean(loss_acc))
            loss_acc = []
            if _improved(dev_value, best_value, cfg.dev_metric):
                best_value = dev_value
                best_params = model.copy_params()
                best_step = step
                since_improved = 0
            else:
                since_improved += 1
            log.append({"step": step, "train_loss": train_loss,
                        "dev_metric": cfg.dev_metric, "dev_value": float(dev_value),
                        "best": best_step == step})
            if since_improved >= cfg.patience:
                logger.info("early stop at step %d (no improvement in %d checkpoints)",
                            step, since_improved)
                break
    model.set_params_(best_params)
    return model, log


def finetune_examples(parallel_pairs, subword_model=None):
    """Training examples from parallel pairs: the encoder side carries a
    language token only, the target ends with [EOS], all positions count."""
    examples = []
    for pp in parallel_pairs:
        src, tgt = pp.src, pp.tgt
        if subword_model is not None:
            src = apply_bpe(src, subword_model)
            tgt = apply_bpe(tgt, subword_model)
        dec = list(tgt.tokens) + [EOS]
        examples.append(TrainingPair(
            task=FINETUNE_TASK, lang=src.lang,
            enc_input=[lang_token(src.lang)] + list(src.tokens),
            dec_target=dec, loss_positions=frozenset(range(len(dec)))))
    return examples


def finetune(model, parallel_pairs, cfg, dev_pairs=None, subword_model=None,
             expected_vocab_hash=None):
    """Full-sequence cross-entropy training initialized from ``model``.

    With ``cfg.max_steps == 0`` the model is returned unchanged.  A
    vocabulary fingerprint mismatch with pre-training is an error.
    """
    if expected_vocab_hash is not None and vocab_fingerprint(model.vocab) != expected_vocab_hash:
        raise VocabMismatch("fine-tuning vocabulary differs from pre-training vocabulary")
    examples = finetune_examples(parallel_pairs, subword_model)
    dev = finetune_examples(dev_pairs, subword_model) if dev_pairs is not None else None
    if cfg.max_steps == 0:
        return model, []
    return train(model, examples, cfg, dev_pairs=dev)


def checkpoint_log_to_csv(log, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,train_loss,dev_metric,dev_value,best\n")
        for row in log:
            f.write(f"{row['step']},{row['train_loss']!r},{row['dev_metric']},"
                    f"{row['dev_value']!r},{int(row['best'])}\n")


def gradient_check(model, pairs, eps=1e-5, tiny=1e-10):
    """Max relative error between analytic and central-difference grads.

    Parameters where both gradients are below ``tiny`` in magnitude are
    compared absolutely (FD noise would otherwise dominate the ratio).
    """
    _, grads = model.loss_and_grads(pairs)
    worst = 0.0
    for name, param in model.params.items():
        flat = param.ravel()
        gflat = grads[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = model.loss_and_grads(pairs)
            flat[i] = orig - eps
            down, _ = model.loss_and_grads(pairs)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(gflat[i]), abs(fd))
            if denom < tiny:
                continue
            worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


class TinySeq2Seq(BaseEstimator):
    """Estimator wrapper: fit on TrainingPairs, predict greedy decodes."""

    def __init__(self, embed_dim=32, hidden_dim=32, learning_rate=0.5,
                 max_steps=1000, batch_size=16, seed=0, patience=5,
                 checkpoint_interval=100, dev_metric="accuracy", init_scale=0.1):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.seed = seed
        self.patience = patience
        self.checkpoint_interval = checkpoint_interval
        self.dev_metric = dev_metric
        self.init_scale = init_scale

    def _config(self):
        return TrainConfig(learning_rate=self.learning_rate, max_steps=self.max_steps,
                           batch_size=self.batch_size, seed=self.seed,
                           patience=self.patience,
                           checkpoint_interval=self.checkpoint_interval,
                           dev_metric=self.dev_metric)

    def fit(self, X, y=None, dev=None, vocab=None):
        X = list(X)
        if vocab is None:
            vocab = build_vocab([p.enc_input for p in X] + [p.dec_target for p in X])
        model = TinyModel(vocab, embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                          seed=self.seed, init_scale=self.init_scale)
        self.model_, self.log_ = train(model, X, self._config(), dev_pairs=dev)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("TinySeq2Seq must be fit before use")

    def predict(self, X):
        self._check_fitted()
        return [self.model_.greedy_decode(p.enc_input) for p in X]

    def score(self, X, y=None):
        self._check_fitted()
        return unigram_accuracy(self.model_, X)
