"""The bundled synthetic noisy benchmark.

A single place pins the generator settings and noise profile used by the
acceptance suite and the gen-synthetic CLI defaults: 2,000 training
sentences over two entity types, with 40% of gold entity spans erased
(false negatives), 5% of gold-O runs gaining a spurious entity (false
positives), and 5% of spans relabeled to the wrong type.

``benchmark_voter_config`` and ``benchmark_schedule`` carry the desk-scale
hyperparameters calibrated on this benchmark: sparse negative sampling
(keep 0.1) makes voter disagreement track annotation noise, and the
staged trainer runs cross-entropy with a positive-risk weight of 10.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus
from .curriculum import SelfTrainConfig, StageSchedule
from .distant import Dictionary, SyntheticSpec, generate_synthetic, inject_noise
from .risk import ConfMpuConfig
from .seeding import make_rng
from .voters import VoterConfig


@dataclass(frozen=True)
class BenchmarkSpec:
    n_train: int = 2000
    n_test: int = 500
    k: int = 2
    dict_size: int = 60
    fn_rate: float = 0.4
    fp_rate: float = 0.05
    type_rate: float = 0.05


def make_benchmark(
    seed: int, spec: BenchmarkSpec = BenchmarkSpec()
) -> tuple[Corpus, Corpus, Dictionary]:
    """(noisy train corpus with gold kept, clean test corpus, dictionary).

    Train and test sentences come from one generator pass so they share the
    dictionary and template distribution; only the training half is
    corrupted.
    """
    gen = SyntheticSpec(
        n_sentences=spec.n_train + spec.n_test,
        k=spec.k,
        dict_size=spec.dict_size,
    )
    gold, dictionary = generate_synthetic(gen, make_rng(seed, "synthetic"))
    train_gold = Corpus(gold.sentences[: spec.n_train], gold.label_set)
    test = Corpus(gold.sentences[spec.n_train :], gold.label_set)
    train = inject_noise(
        train_gold, spec.fn_rate, spec.fp_rate, spec.type_rate, make_rng(seed, "noise")
    )
    return train, test, dictionary


def benchmark_voter_config() -> VoterConfig:
    return VoterConfig(
        count=5, epochs=5, keep_negative_ratio=0.1, learning_rate=1e-3
    )


def benchmark_schedule() -> StageSchedule:
    return StageSchedule(
        stage_epochs=2,
        learning_rate=1e-3,
        loss="ce",
        conf_mpu=ConfMpuConfig(epsilon=0.5, gamma=10.0, loss="ce"),
    )


def benchmark_self_train_config() -> SelfTrainConfig:
    return SelfTrainConfig(rounds=3, epochs=2, sharpen=2.0, learning_rate=5e-4)


BENCHMARK_TAU = 0.5
BENCHMARK_ETA = 5
