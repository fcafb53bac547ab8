"""A small differentiable token classifier with hand-written gradients.

Architecture: per-token context window of embeddings (padding positions use
a dedicated learned embedding), concatenated and passed through one tanh
hidden layer and a softmax output. All parameters are float64 so analytic
gradients can be checked against finite differences at tight tolerances.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .corpus import Corpus, Vocab
from .errors import CompatibilityError, FormatError, NumericError

_CHECKPOINT_MAGIC = b"PUCLCKPT1\n"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_classes: int
    embed_dim: int = 32
    window: int = 2
    hidden_dim: int = 64
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1 or self.window < 0:
            raise ValueError("model dimensions must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes (unlabeled + one entity type)")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass
class Gradients:
    embedding: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("embedding", self.embedding),
            ("w1", self.w1),
            ("b1", self.b1),
            ("w2", self.w2),
            ("b2", self.b2),
        ]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; finite for |logits| up to ~1e3
    and beyond."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class TokenClassifier:
    """Embedding table + context-window MLP + softmax.

    ``vocab`` and ``label_names`` travel with the parameters so a checkpoint
    is self-contained. Forward passes are pure functions of (parameters,
    input); training mutates parameters only through ``adam_step``.
    """

    def __init__(self, config: ModelConfig, vocab: Vocab, label_names: Sequence[str]):
        if config.vocab_size != vocab.size:
            raise ValueError(f"config vocab_size {config.vocab_size} != vocab size {vocab.size}")
        if config.n_classes != len(label_names) + 1:
            raise ValueError("n_classes must be number of entity types + 1")
        self.config = config
        self.vocab = vocab
        self.label_names = tuple(label_names)
        rng = np.random.Generator(np.random.PCG64(config.seed))
        d, h, c = config.embed_dim, config.hidden_dim, config.n_classes
        in_dim = (2 * config.window + 1) * d
        s = config.init_scale
        self.embedding = rng.normal(0.0, s, size=(config.vocab_size, d))
        self.w1 = rng.normal(0.0, s, size=(in_dim, h))
        self.b1 = np.zeros(h)
        self.w2 = rng.normal(0.0, s, size=(h, c))
        self.b2 = np.zeros(c)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("embedding", self.embedding),
            ("w1", self.w1),
            ("b1", self.b1),
            ("w2", self.w2),
            ("b2", self.b2),
        ]

    def copy(self) -> "TokenClassifier":
        clone = object.__new__(TokenClassifier)
        clone.config = self.config
        clone.vocab = self.vocab
        clone.label_names = self.label_names
        for name, arr in self.parameters():
            setattr(clone, name, arr.copy())
        return clone

    # -- forward / backward --------------------------------------------------

    def window_rows(self, token_ids: np.ndarray) -> np.ndarray:
        """[M, 2w+1] window index matrix for one sentence; positions beyond
        the sentence edges use the padding index."""
        w = self.config.window
        m = len(token_ids)
        padded = np.full(m + 2 * w, Vocab.PAD, dtype=np.int64)
        padded[w : w + m] = token_ids
        out = np.empty((m, 2 * w + 1), dtype=np.int64)
        for j in range(2 * w + 1):
            out[:, j] = padded[j : j + m]
        return out

    def forward_rows(self, rows: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Probabilities [N, n_classes] for window-index rows [N, 2w+1],
        plus the cache backward_rows needs."""
        n = rows.shape[0]
        flat = self.embedding[rows].reshape(n, -1)
        hidden = np.tanh(flat @ self.w1 + self.b1)
        probs = softmax(hidden @ self.w2 + self.b2)
        return probs, (rows, flat, hidden, probs)

    def forward(self, token_ids: Sequence[int] | np.ndarray, token_idx: int) -> np.ndarray:
        """Class distribution for one token of one sentence."""
        ids = np.asarray(token_ids, dtype=np.int64)
        if not 0 <= token_idx < len(ids):
            raise IndexError(f"token_idx {token_idx} out of bounds for sentence of {len(ids)}")
        rows = self.window_rows(ids)[token_idx : token_idx + 1]
        probs, _ = self.forward_rows(rows)
        return probs[0]

    def backward_rows(self, cache: tuple, dprobs: np.ndarray) -> Gradients:
        """Exact gradients of sum_tokens <dprobs_t, probs_t> chained through
        softmax, hidden layer, and embeddings."""
        rows, flat, hidden, probs = cache
        if dprobs.shape != probs.shape:
            raise ValueError(f"gradient shape {dprobs.shape} != probs shape {probs.shape}")
        inner = (dprobs * probs).sum(axis=1, keepdims=True)
        dlogits = probs * (dprobs - inner)
        dw2 = hidden.T @ dlogits
        db2 = dlogits.sum(axis=0)
        dhidden = dlogits @ self.w2.T
        dz1 = dhidden * (1.0 - hidden**2)
        dw1 = flat.T @ dz1
        db1 = dz1.sum(axis=0)
        dflat = dz1 @ self.w1.T
        dembed = np.zeros_like(self.embedding)
        d = self.config.embed_dim
        np.add.at(dembed, rows.ravel(), dflat.reshape(-1, d))
        return Gradients(dembed, dw1, db1, dw2, db2)

    # -- corpus helpers ------------------------------------------------------

    def encode_corpus(self, corpus: Corpus) -> list[np.ndarray]:
        return [self.vocab.encode_sentence(s) for s in corpus.sentences]

    def all_window_rows(self, corpus: Corpus) -> np.ndarray:
        """Window rows for every token of the corpus, in flat token order."""
        return np.concatenate(
            [self.window_rows(ids) for ids in self.encode_corpus(corpus)], axis=0
        )


@dataclass
class AdamState:
    """Adam moment accumulators, one pair per parameter array."""

    learning_rate: float
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_model(model: TokenClassifier, learning_rate: float) -> "AdamState":
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return AdamState(
            learning_rate=learning_rate,
            m={name: np.zeros_like(p) for name, p in model.parameters()},
            v={name: np.zeros_like(p) for name, p in model.parameters()},
        )


def adam_step(model: TokenClassifier, grads: Gradients, state: AdamState) -> None:
    """Standard Adam update with bias correction; fails fast on non-finite
    gradients."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for (name, param), (gname, grad) in zip(model.parameters(), grads.arrays()):
        if name != gname or param.shape != grad.shape:
            raise ValueError(f"gradient/parameter mismatch at {name}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient in {name} at step {state.step}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / corr1
        v_hat = v / corr2
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def predict(model: TokenClassifier, corpus: Corpus) -> list[np.ndarray]:
    """Argmax label per token, per sentence; ties go to the smallest class
    id (np.argmax picks the first maximum)."""
    if corpus.label_set.names != model.label_names:
        raise CompatibilityError(
            f"label sets differ: model {list(model.label_names)} "
            f"vs corpus {list(corpus.label_set.names)}"
        )
    out = []
    for ids in model.encode_corpus(corpus):
        probs, _ = model.forward_rows(model.window_rows(ids))
        out.append(np.argmax(probs, axis=1).astype(np.int64))
    return out


# --- checkpoint format ----------------------------------------------------
#
# magic "PUCLCKPT1\n", then an 8-byte little-endian header length, then a
# UTF-8 JSON header {config, labels, vocab, arrays: [[name, shape], ...]},
# then each array's raw bytes as little-endian float64 in header order.


def save_checkpoint(model: TokenClassifier, stream: BinaryIO) -> None:
    arrays = model.parameters()
    header = json.dumps(
        {
            "config": {
                "vocab_size": model.config.vocab_size,
                "n_classes": model.config.n_classes,
                "embed_dim": model.config.embed_dim,
                "window": model.config.window,
                "hidden_dim": model.config.hidden_dim,
                "init_scale": model.config.init_scale,
                "seed": model.config.seed,
            },
            "labels": list(model.label_names),
            "vocab": list(model.vocab.words()),
            "arrays": [[name, list(arr.shape)] for name, arr in arrays],
        },
        sort_keys=True,
    ).encode("utf-8")
    stream.write(_CHECKPOINT_MAGIC)
    stream.write(struct.pack("<Q", len(header)))
    stream.write(header)
    for _, arr in arrays:
        stream.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(stream: BinaryIO) -> TokenClassifier:
    magic = stream.read(len(_CHECKPOINT_MAGIC))
    if magic != _CHECKPOINT_MAGIC:
        raise FormatError("not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack("<Q", stream.read(8))
    header = json.loads(stream.read(header_len).decode("utf-8"))
    config = ModelConfig(**header["config"])
    vocab = Vocab(header["vocab"])
    model = TokenClassifier(config, vocab, header["labels"])
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        raw = stream.read(count * 8)
        if len(raw) != count * 8:
            raise FormatError(f"checkpoint truncated in array {name}")
        arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        setattr(model, name, arr)
    return model
