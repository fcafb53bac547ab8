"""Voter ensembles: training, soft-label ensembling, confidence scores, and
pairwise-disagreement difficulty scores.

Voters are small token classifiers trained on the distant labels with a
plain positive-negative risk and negative sampling. Per-voter variability
comes from two sources only: seed-dependent initialization and independent
negative sampling; all voters visit sentences in the same shuffled order.
Difficulty is the mean symmetric KL divergence between the class
distributions of all voter pairs, computed once against the frozen
ensemble.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .corpus import Corpus, TokenRef, Vocab, build_vocab
from .errors import NumericError
from .model import AdamState, ModelConfig, TokenClassifier, adam_step
from .risk import PROB_FLOOR, LossKind, pn_risk
from .seeding import derive_seed, make_rng


@dataclass(frozen=True)
class VoterConfig:
    """Sparse negative sampling (small keep ratio) is deliberate: it is the
    voters' second source of variability, and the per-voter variance it
    induces on weakly-evidenced tokens is what makes disagreement track
    annotation noise."""

    count: int = 5
    epochs: int = 5
    keep_negative_ratio: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 32
    loss: LossKind = "ce"

    def __post_init__(self) -> None:
        if self.count < 2:
            raise ValueError("need at least two voters")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 < self.keep_negative_ratio <= 1.0:
            raise ValueError("keep_negative_ratio must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class VoterEnsemble:
    voters: list[TokenClassifier]

    def __post_init__(self) -> None:
        if len(self.voters) < 2:
            raise ValueError("an ensemble needs at least two voters")
        first = self.voters[0]
        for v in self.voters[1:]:
            if v.vocab != first.vocab or v.label_names != first.label_names:
                raise ValueError("voters must share vocabulary and label set")

    @property
    def vocab(self) -> Vocab:
        return self.voters[0].vocab

    @property
    def size(self) -> int:
        return len(self.voters)


def _train_one_voter(
    corpus: Corpus,
    model_config: ModelConfig,
    cfg: VoterConfig,
    vocab: Vocab,
    seed: int,
    voter_idx: int,
) -> TokenClassifier:
    init_seed = derive_seed(seed, "voter-init", voter_idx)
    model = TokenClassifier(
        ModelConfig(
            vocab_size=vocab.size,
            n_classes=model_config.n_classes,
            embed_dim=model_config.embed_dim,
            window=model_config.window,
            hidden_dim=model_config.hidden_dim,
            init_scale=model_config.init_scale,
            seed=init_seed,
        ),
        vocab,
        corpus.label_set.names,
    )
    adam = AdamState.for_model(model, cfg.learning_rate)
    sample_rng = make_rng(seed, "voter-sample", voter_idx)
    # Shared stream: every voter sees the same batch order per epoch.
    shuffle_rng = make_rng(seed, "voter-shuffle")
    sentence_rows = [model.window_rows(ids) for ids in model.encode_corpus(corpus)]
    sentence_labels = [
        np.array(s.distant_labels(), dtype=np.int64) for s in corpus.sentences
    ]
    n_sentences = len(corpus.sentences)
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n_sentences)
        for start in range(0, n_sentences, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            rows = np.concatenate([sentence_rows[i] for i in batch], axis=0)
            labels = np.concatenate([sentence_labels[i] for i in batch])
            probs, cache = model.forward_rows(rows)
            value, dprobs = pn_risk(probs, labels, cfg.keep_negative_ratio, sample_rng, cfg.loss)
            if not np.isfinite(value):
                raise NumericError(f"non-finite voter risk (voter {voter_idx})")
            adam_step(model, model.backward_rows(cache, dprobs), adam)
    return model


def train_voters(
    corpus: Corpus,
    model_config: ModelConfig,
    voter_config: VoterConfig,
    seed: int,
    vocab: Vocab | None = None,
    threads: int = 1,
) -> VoterEnsemble:
    """Train V independent voters on the distant labels.

    Voter v derives its initialization and sampling seeds from (seed, v), so
    adding voters never perturbs existing ones. Voters share no state and
    train identically whether sequential or threaded.
    """
    if not np.any(corpus.distant_array() > 0):
        raise ValueError("corpus has no positive distant labels; voters cannot train")
    if vocab is None:
        vocab = build_vocab(corpus)

    def work(v: int) -> TokenClassifier:
        return _train_one_voter(corpus, model_config, voter_config, vocab, seed, v)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            voters = list(pool.map(work, range(voter_config.count)))
    else:
        voters = [work(v) for v in range(voter_config.count)]
    return VoterEnsemble(voters)


# --- ensembling and scoring -------------------------------------------------


def ensemble_distribution(
    ensemble: VoterEnsemble, token_ids: Sequence[int] | np.ndarray, token_idx: int
) -> np.ndarray:
    """Elementwise mean of the voters' class distributions for one token."""
    return np.mean([v.forward(token_ids, token_idx) for v in ensemble.voters], axis=0)


def confidence(ensemble_dist: np.ndarray) -> float:
    """Probability mass on the entity classes: 1 - Pr(unlabeled)."""
    return float(np.sum(ensemble_dist[1:]))


def pairwise_disagreement(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric KL divergence (mean of both directions), probabilities
    floored at 1e-12 inside the logs."""
    p = np.maximum(np.asarray(p, dtype=np.float64), PROB_FLOOR)
    q = np.maximum(np.asarray(q, dtype=np.float64), PROB_FLOOR)
    logratio = np.log(p) - np.log(q)
    return 0.5 * float((p * logratio).sum() + (q * -logratio).sum())


def _all_voter_distributions(ensemble: VoterEnsemble, corpus: Corpus) -> np.ndarray:
    """[V, n_tokens, n_classes] stack of per-voter distributions."""
    out = []
    for voter in ensemble.voters:
        probs = [
            voter.forward_rows(voter.window_rows(ids))[0]
            for ids in voter.encode_corpus(corpus)
        ]
        out.append(np.concatenate(probs, axis=0))
    return np.stack(out, axis=0)


class ConfidenceTable:
    """Per-token ensemble distribution and entity-confidence score."""

    def __init__(self, corpus: Corpus, distributions: np.ndarray):
        if distributions.shape[0] != corpus.n_tokens:
            raise ValueError("distribution count does not match corpus tokens")
        self.corpus = corpus
        self.distributions = distributions
        self.lam = distributions[:, 1:].sum(axis=1)

    def distribution_of(self, ref: TokenRef) -> np.ndarray:
        return self.distributions[self.corpus.flat_index(ref)]

    def lambda_of(self, ref: TokenRef) -> float:
        return float(self.lam[self.corpus.flat_index(ref)])


class DifficultyTable:
    """Per-token difficulty score H >= 0."""

    def __init__(self, corpus: Corpus, scores: np.ndarray):
        if scores.shape[0] != corpus.n_tokens:
            raise ValueError("score count does not match corpus tokens")
        if np.any(~np.isfinite(scores)) or np.any(scores < 0):
            raise ValueError("difficulty scores must be finite and non-negative")
        self.corpus = corpus
        self.scores = scores

    def score_of(self, ref: TokenRef) -> float:
        return float(self.scores[self.corpus.flat_index(ref)])


def confidence_table(ensemble: VoterEnsemble, corpus: Corpus) -> ConfidenceTable:
    dists = _all_voter_distributions(ensemble, corpus).mean(axis=0)
    return ConfidenceTable(corpus, dists)


def difficulty_scores(ensemble: VoterEnsemble, corpus: Corpus) -> DifficultyTable:
    """Mean symmetric KL disagreement over all unordered voter pairs, per
    token."""
    if ensemble.size < 2:
        raise ValueError("difficulty scores need at least two voters")
    dists = _all_voter_distributions(ensemble, corpus)
    logs = np.log(np.maximum(dists, PROB_FLOOR))
    floored = np.maximum(dists, PROB_FLOOR)
    v = ensemble.size
    total = np.zeros(dists.shape[1])
    for i in range(v):
        for j in range(i + 1, v):
            logratio = logs[i] - logs[j]
            kl_ij = (floored[i] * logratio).sum(axis=1)
            kl_ji = (floored[j] * -logratio).sum(axis=1)
            total += 0.5 * (kl_ij + kl_ji)
    scores = total / (v * (v - 1) / 2)
    # floors can leave tiny negatives behind; difficulty is non-negative
    return DifficultyTable(corpus, np.maximum(scores, 0.0))


def dump_scores_tsv(
    corpus: Corpus,
    conf: ConfidenceTable,
    diff: DifficultyTable,
    stream: IO[str],
) -> None:
    """One row per token: sentence_idx, token_idx, surface, distant label
    name, lambda, difficulty."""
    name_of = corpus.label_set.name_of
    flat = 0
    for s_idx, sent in enumerate(corpus.sentences):
        for t_idx, tok in enumerate(sent.tokens):
            stream.write(
                f"{s_idx}\t{t_idx}\t{tok.surface}\t{name_of(tok.distant_label)}"
                f"\t{conf.lam[flat]:.17g}\t{diff.scores[flat]:.17g}\n"
            )
            flat += 1
