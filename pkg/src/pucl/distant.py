"""Dictionary-based distant annotation, noise diagnostics, and synthetic
noisy-corpus generation.

Annotation resolves overlapping dictionary matches by maximizing the total
number of matched tokens (weighted-interval scheduling over candidate
matches). Ties are broken deterministically: prefer the labeling whose
sequence of (start, -length, label) triples is lexicographically smallest,
i.e. leftmost-longest, then smallest type id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .corpus import Corpus, LabelSet, Sentence, Token, extract_spans
from .errors import FormatError


@dataclass(frozen=True)
class Dictionary:
    """Deduplicated (tokenized surface, type id) entries."""

    entries: tuple[tuple[tuple[str, ...], int], ...]
    label_set: LabelSet

    @staticmethod
    def build(pairs: Iterable[tuple[str, str]], label_set: LabelSet) -> "Dictionary":
        """From (surface text, type name) pairs; surfaces are whitespace
        tokenized and case-folded, duplicates collapse to one entry."""
        seen: set[tuple[tuple[str, ...], int]] = set()
        entries: list[tuple[tuple[str, ...], int]] = []
        for surface, type_name in pairs:
            tokens = tuple(surface.casefold().split())
            if not tokens:
                raise FormatError(f"empty dictionary surface for type {type_name!r}")
            entry = (tokens, label_set.id_of(type_name))
            if entry not in seen:
                seen.add(entry)
                entries.append(entry)
        return Dictionary(tuple(entries), label_set)

    def __len__(self) -> int:
        return len(self.entries)


def read_dictionary_pairs(
    stream: IO[str] | Iterable[str],
) -> tuple[list[tuple[str, str]], list[str]]:
    """Parse `surface<TAB>type_name` lines into raw pairs plus the type
    names in order of first appearance. Surfaces may contain spaces."""
    pairs: list[tuple[str, str]] = []
    names: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(stream, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise FormatError(f"dictionary line {lineno}: expected 2 columns, got {len(cols)}")
        surface, type_name = cols
        pairs.append((surface, type_name))
        if type_name not in seen:
            seen.add(type_name)
            names.append(type_name)
    return pairs, names


def read_dictionary(stream: IO[str] | Iterable[str], label_set: LabelSet | None = None) -> Dictionary:
    """Parse a dictionary TSV; without a label_set the type names are
    collected from the file itself."""
    pairs, names = read_dictionary_pairs(stream)
    if label_set is None:
        if not names:
            raise FormatError("empty dictionary input with no label set given")
        label_set = LabelSet(names)
    return Dictionary.build(pairs, label_set)


class MatcherIndex:
    """First-token lookup over dictionary entries.

    Buckets map a first token to its candidate entries, longest first, so a
    scan position answers "which entries could start here" without touching
    the rest of the dictionary.
    """

    def __init__(self, dictionary: Dictionary):
        buckets: dict[str, list[tuple[tuple[str, ...], int]]] = {}
        max_len = 0
        for tokens, label in dictionary.entries:
            buckets.setdefault(tokens[0], []).append((tokens, label))
            max_len = max(max_len, len(tokens))
        for key in buckets:
            buckets[key].sort(key=lambda e: (-len(e[0]), e[1], e[0]))
        self.buckets = buckets
        self.max_entry_len = max_len
        self.label_set = dictionary.label_set
        self.n_entries = len(dictionary)

    def candidates_at(self, folded: Sequence[str], start: int) -> list[tuple[int, int]]:
        """(length, label) of every entry matching exactly at ``start``,
        longest first."""
        out: list[tuple[int, int]] = []
        for tokens, label in self.buckets.get(folded[start], ()):
            length = len(tokens)
            if start + length <= len(folded) and tuple(folded[start : start + length]) == tokens:
                out.append((length, label))
        return out


def compile_dictionary(
    entries: Dictionary | Iterable[tuple[str, str]],
    label_set: LabelSet | None = None,
) -> MatcherIndex:
    """Build a MatcherIndex from a Dictionary or raw (surface, type) pairs."""
    if isinstance(entries, Dictionary):
        return MatcherIndex(entries)
    if label_set is None:
        raise ValueError("label_set is required when passing raw entry pairs")
    return MatcherIndex(Dictionary.build(entries, label_set))


def annotate(sentence: Sentence | Sequence[str], matcher: MatcherIndex) -> list[int]:
    """Label a sentence with the max-coverage non-overlapping match set.

    Dynamic program over start positions, right to left: best(i) is the best
    labeling of tokens[i:]. At equal coverage a match starting at i beats
    skipping i, and among matches the longest (then smallest type id) wins,
    which realizes the global leftmost-longest tie rule.
    """
    surfaces = sentence.surfaces() if isinstance(sentence, Sentence) else list(sentence)
    folded = [s.casefold() for s in surfaces]
    n = len(folded)
    # best[i] = (coverage of tokens[i:], chosen (length, label) at i or None)
    best: list[tuple[int, tuple[int, int] | None]] = [(0, None)] * (n + 1)
    for i in range(n - 1, -1, -1):
        cov, choice = best[i + 1][0], None
        for length, label in matcher.candidates_at(folded, i):
            cand_cov = length + best[i + length][0]
            # candidates_at yields longest-first, ties by smallest label,
            # so strict improvement keeps the preferred option
            if cand_cov > cov or (cand_cov == cov and choice is None):
                cov, choice = cand_cov, (length, label)
        best[i] = (cov, choice)

    labels = [0] * n
    i = 0
    while i < n:
        choice = best[i][1]
        if choice is None:
            i += 1
        else:
            length, label = choice
            labels[i : i + length] = [label] * length
            i += length
    return labels


@dataclass(frozen=True)
class NoiseStats:
    """Token-level disagreement between distant and gold labels.

    false_negative: gold entity, distant 0. false_positive: gold 0, distant
    entity. positive_type_error: both entities, different types. Rates:
    false_negative_rate over gold-entity tokens; the other three over
    distant-entity tokens, so positive_error_rate is exactly the sum of the
    false-positive and type-error rates.
    """

    false_negatives: int
    false_positives: int
    positive_type_errors: int
    gold_positive_tokens: int
    distant_positive_tokens: int
    total_tokens: int

    @property
    def false_negative_rate(self) -> float:
        return self.false_negatives / self.gold_positive_tokens if self.gold_positive_tokens else 0.0

    @property
    def false_positive_rate(self) -> float:
        return self.false_positives / self.distant_positive_tokens if self.distant_positive_tokens else 0.0

    @property
    def positive_type_error_rate(self) -> float:
        return self.positive_type_errors / self.distant_positive_tokens if self.distant_positive_tokens else 0.0

    @property
    def positive_error_rate(self) -> float:
        if not self.distant_positive_tokens:
            return 0.0
        return (self.false_positives + self.positive_type_errors) / self.distant_positive_tokens

    def to_json(self) -> str:
        return json.dumps(
            {
                "counts": {
                    "false_negatives": self.false_negatives,
                    "false_positives": self.false_positives,
                    "positive_type_errors": self.positive_type_errors,
                    "gold_positive_tokens": self.gold_positive_tokens,
                    "distant_positive_tokens": self.distant_positive_tokens,
                    "total_tokens": self.total_tokens,
                },
                "rates": {
                    "false_negative_rate": self.false_negative_rate,
                    "false_positive_rate": self.false_positive_rate,
                    "positive_type_error_rate": self.positive_type_error_rate,
                    "positive_error_rate": self.positive_error_rate,
                },
            },
            sort_keys=True,
            indent=2,
        )


def noise_report(corpus: Corpus) -> NoiseStats:
    """Classify every token where distant != gold; needs full gold labels."""
    distant = corpus.distant_array()
    gold = corpus.gold_array()
    fn = int(np.sum((gold != 0) & (distant == 0)))
    fp = int(np.sum((gold == 0) & (distant != 0)))
    te = int(np.sum((gold != 0) & (distant != 0) & (gold != distant)))
    return NoiseStats(
        false_negatives=fn,
        false_positives=fp,
        positive_type_errors=te,
        gold_positive_tokens=int(np.sum(gold != 0)),
        distant_positive_tokens=int(np.sum(distant != 0)),
        total_tokens=len(gold),
    )


def inject_noise(
    corpus: Corpus,
    fn_rate: float,
    fp_rate: float,
    type_rate: float,
    rng: np.random.Generator,
) -> Corpus:
    """Corrupt gold labels into distant labels; surfaces and gold are kept.

    Per gold entity span, one uniform draw u decides: u < fn_rate erases the
    span to 0; fn_rate <= u < fn_rate+type_rate relabels it to a uniformly
    random other type (so the two corruptions are mutually exclusive and the
    erase check wins). Per maximal gold-O run, with probability fp_rate a
    random sub-run of length 1..3 gets a random entity type.
    """
    for name, rate in (("fn_rate", fn_rate), ("fp_rate", fp_rate), ("type_rate", type_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must be in [0,1], got {rate}")
    if fn_rate + type_rate > 1.0 + 1e-12:
        raise ValueError("fn_rate + type_rate must not exceed 1")
    k = corpus.label_set.k
    if type_rate > 0 and k < 2:
        raise ValueError("type_rate > 0 needs at least two entity types")

    new_sentences: list[Sentence] = []
    for sent in corpus.sentences:
        gold = [t.gold_label for t in sent.tokens]
        if any(g is None for g in gold):
            raise FormatError("inject_noise needs gold labels on every token")
        distant = [0] * len(gold)
        for span in extract_spans(gold):  # type: ignore[arg-type]
            u = rng.random()
            if u < fn_rate:
                label = 0
            elif u < fn_rate + type_rate:
                others = [t for t in range(1, k + 1) if t != span.label]
                label = others[int(rng.integers(0, len(others)))]
            else:
                label = span.label
            for i in range(span.start, span.end + 1):
                distant[i] = label
        for run_start, run_end in _zero_runs(gold):
            if rng.random() < fp_rate:
                run_len = run_end - run_start + 1
                length = int(rng.integers(1, min(3, run_len) + 1))
                start = run_start + int(rng.integers(0, run_len - length + 1))
                label = int(rng.integers(1, k + 1))
                for i in range(start, start + length):
                    distant[i] = label
        new_sentences.append(
            Sentence(
                tuple(
                    Token(t.surface, distant[i], t.gold_label)
                    for i, t in enumerate(sent.tokens)
                )
            )
        )
    return Corpus(new_sentences, corpus.label_set)


def _zero_runs(labels: Sequence[int | None]) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, lab in enumerate(labels):
        if lab == 0 and start is None:
            start = i
        elif lab != 0 and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(labels) - 1))
    return runs


# --- synthetic corpus generation -----------------------------------------


def default_templates() -> list[list[str]]:
    """Sentence skeletons: literal words plus "{E}" entity and "{F}" filler
    slots. Every template carries at least one entity slot."""
    return [
        ["the", "{E}", "of", "{F}", "{F}", "was", "measured", "in", "the", "study"],
        ["{F}", "{F}", "showed", "increased", "{E}", "and", "decreased", "{E}"],
        ["a", "significant", "effect", "of", "{F}", "on", "{E}", "was", "observed"],
        ["{E}", "was", "associated", "with", "{F}", "{F}", "and", "{F}"],
        ["results", "for", "{E}", "were", "higher", "in", "{F}", "{F}"],
        ["the", "{F}", "study", "measured", "{E}", "in", "{F}", "animals"],
        ["{F}", "between", "{E}", "and", "{E}", "was", "significant"],
        ["in", "{F}", "{F}", "the", "{E}", "decreased", "with", "{F}"],
        ["{F}", "and", "{F}", "were", "associated", "with", "lower", "{E}"],
        ["the", "effect", "of", "{E}", "on", "{F}", "was", "not", "significant"],
        ["{F}", "analysis", "of", "{E}", "showed", "{F}", "{F}", "results"],
        ["observed", "{E}", "levels", "were", "lower", "after", "{F}", "{F}"],
    ]


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic gold corpus generator.

    Entity entries are drawn uniformly, so every dictionary surface occurs
    often enough for a small model to learn. Filler words follow a Zipf-ish
    frequency profile, giving a realistic mix of common and rare context.
    """

    n_sentences: int
    k: int = 2
    dict_size: int = 60
    templates: tuple[tuple[str, ...], ...] = tuple(tuple(t) for t in default_templates())
    entity_len_probs: tuple[float, ...] = (0.45, 0.35, 0.20)
    filler_vocab: int = 150
    words_per_type: int = 25
    zipf_exponent: float = 1.1

    def __post_init__(self) -> None:
        if self.n_sentences < 1 or self.k < 1 or self.dict_size < 1:
            raise ValueError("n_sentences, k and dict_size must be positive")
        if not self.templates:
            raise ValueError("template pool must not be empty")
        if not self.entity_len_probs or abs(sum(self.entity_len_probs) - 1.0) > 1e-9:
            raise ValueError("entity_len_probs must sum to 1")
        if self.filler_vocab < 1 or self.words_per_type < 1:
            raise ValueError("vocab sizes must be positive")


def generate_synthetic(
    spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[Corpus, Dictionary]:
    """Gold-labeled corpus plus the dictionary it was generated from.

    Deterministic for a given generator state. Every entity token's surface
    comes from a dictionary entry of the matching type.
    """
    label_set = LabelSet([f"T{t}" for t in range(1, spec.k + 1)])
    fillers = [f"w{i:03d}" for i in range(spec.filler_vocab)]
    weights = 1.0 / np.arange(1, spec.filler_vocab + 1, dtype=np.float64) ** spec.zipf_exponent
    weights /= weights.sum()
    pools = {
        t: [f"x{t}{i:02d}" for i in range(spec.words_per_type)]
        for t in range(1, spec.k + 1)
    }

    entries: list[tuple[str, str]] = []
    seen: set[tuple[str, int]] = set()
    lengths = np.arange(1, len(spec.entity_len_probs) + 1)
    attempts = 0
    while len(entries) < spec.dict_size and attempts < spec.dict_size * 50:
        attempts += 1
        type_id = 1 + len(entries) % spec.k  # round-robin keeps every type populated
        length = int(rng.choice(lengths, p=np.asarray(spec.entity_len_probs)))
        words = [pools[type_id][int(rng.integers(0, spec.words_per_type))] for _ in range(length)]
        surface = " ".join(words)
        if (surface, type_id) in seen:
            continue
        seen.add((surface, type_id))
        entries.append((surface, label_set.name_of(type_id)))
    dictionary = Dictionary.build(entries, label_set)

    entry_tokens = [(tokens, label) for tokens, label in dictionary.entries]
    sentences: list[Sentence] = []
    for _ in range(spec.n_sentences):
        template = spec.templates[int(rng.integers(0, len(spec.templates)))]
        tokens: list[Token] = []
        for slot in template:
            if slot == "{E}":
                e_tokens, e_label = entry_tokens[int(rng.integers(0, len(entry_tokens)))]
                for w in e_tokens:
                    tokens.append(Token(w, e_label, e_label))
            elif slot == "{F}":
                w = fillers[int(rng.choice(spec.filler_vocab, p=weights))]
                tokens.append(Token(w, 0, 0))
            else:
                tokens.append(Token(slot, 0, 0))
        sentences.append(Sentence(tuple(tokens)))
    return Corpus(sentences, label_set), dictionary
