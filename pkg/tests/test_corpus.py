import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pucl.corpus import (
    Corpus,
    LabelSet,
    Sentence,
    Span,
    Token,
    Vocab,
    build_vocab,
    extract_spans,
    read_conll,
    write_conll,
)
from pucl.errors import FormatError


def parse(text: str, **kwargs) -> Corpus:
    return read_conll(io.StringIO(text), **kwargs)


class TestLabelSet:
    def test_ids_and_names(self):
        ls = LabelSet(["PER", "ORG"])
        assert ls.k == 2
        assert ls.id_of("O") == 0
        assert ls.id_of("PER") == 1
        assert ls.name_of(2) == "ORG"

    def test_rejects_duplicates_and_o(self):
        with pytest.raises(FormatError):
            LabelSet(["PER", "PER"])
        with pytest.raises(FormatError):
            LabelSet(["O"])
        with pytest.raises(FormatError):
            LabelSet([])

    def test_unknown_name(self):
        with pytest.raises(FormatError):
            LabelSet(["PER"]).id_of("LOC")


class TestReadConll:
    def test_single_token_round_trip(self):
        corpus = parse("John\tPER\n\n")
        assert len(corpus.sentences) == 1
        assert len(corpus.sentences[0]) == 1
        tok = corpus.sentences[0].tokens[0]
        assert tok.surface == "John"
        assert tok.distant_label == corpus.label_set.id_of("PER")

    def test_direct_parse(self):
        corpus = parse("a\tO\nb\tPER\nc\tPER\n")
        assert [t.distant_label for t in corpus.sentences[0].tokens] == [0, 1, 1]

    def test_three_column_parse(self):
        corpus = parse("x\tO\tPER\n")
        tok = corpus.sentences[0].tokens[0]
        assert tok.distant_label == 0
        assert tok.gold_label == corpus.label_set.id_of("PER")

    def test_wrong_column_count(self):
        with pytest.raises(FormatError, match="line 2"):
            parse("a\tO\nb\tO\tPER\tX\n")

    def test_unknown_label_with_label_set(self):
        with pytest.raises(FormatError, match="LOC"):
            parse("a\tLOC\n", label_set=LabelSet(["PER"]))

    def test_empty_input(self):
        with pytest.raises(FormatError):
            parse("")
        with pytest.raises(FormatError):
            parse("\n\n")

    def test_label_inference_order(self):
        corpus = parse("a\tORG\nb\tPER\n\nc\tORG\n\n")
        assert corpus.label_set.names == ("ORG", "PER")

    def test_long_sentence_split(self):
        text = "".join(f"w{i}\tO\n" for i in range(10)) + "\n"
        corpus = parse(text, label_set=LabelSet(["PER"]), max_sentence_len=4)
        assert [len(s) for s in corpus.sentences] == [4, 4, 2]

    def test_bad_surface(self):
        with pytest.raises(FormatError):
            parse("a b\tO\n")


class TestWriteConll:
    def test_ends_with_single_blank_line(self):
        corpus = parse("a\tPER\n\n")
        out = io.StringIO()
        write_conll(corpus, out)
        assert out.getvalue().endswith("PER\n\n")
        assert not out.getvalue().endswith("\n\n\n")

    def test_gold_column_written(self):
        corpus = parse("a\tO\tPER\n\n")
        out = io.StringIO()
        write_conll(corpus, out, include_gold=True)
        assert out.getvalue().splitlines()[0] == "a\tO\tPER"

    def test_round_trip_fixed(self):
        text = "a\tO\tPER\nb\tPER\tPER\n\nc\tO\tO\n\n"
        corpus = parse(text)
        out = io.StringIO()
        write_conll(corpus, out)
        assert parse(out.getvalue()) == corpus


SURFACE = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x2FF),
    min_size=1,
    max_size=6,
)


@st.composite
def corpora(draw):
    names = draw(st.lists(st.sampled_from(["PER", "ORG", "LOC"]), min_size=1, max_size=3, unique=True))
    ls = LabelSet(names)
    k = ls.k

    def token(_):
        surface = draw(SURFACE)
        distant = draw(st.integers(0, k))
        gold = draw(st.one_of(st.none(), st.integers(0, k)))
        return Token(surface, distant, gold)

    sentences = draw(
        st.lists(
            st.builds(
                lambda toks: Sentence(tuple(toks)),
                st.lists(st.builds(token, st.none()), min_size=1, max_size=8),
            ),
            min_size=1,
            max_size=12,
        )
    )
    return Corpus(sentences, ls)


class TestRoundTripProperty:
    @settings(max_examples=100, deadline=None)
    @given(corpora())
    def test_write_read_identity(self, corpus):
        out = io.StringIO()
        write_conll(corpus, out)
        again = parse(out.getvalue(), label_set=corpus.label_set)
        assert again == corpus

    def test_hundred_sentence_random_corpus(self):
        rng = np.random.default_rng(0)
        ls = LabelSet(["A", "B"])
        sentences = []
        for _ in range(100):
            n = int(rng.integers(1, 9))
            toks = tuple(
                Token(f"w{rng.integers(0, 50)}", int(rng.integers(0, 3)), int(rng.integers(0, 3)))
                for _ in range(n)
            )
            sentences.append(Sentence(toks))
        corpus = Corpus(sentences, ls)
        out = io.StringIO()
        write_conll(corpus, out)
        assert parse(out.getvalue(), label_set=ls) == corpus


class TestExtractSpans:
    def test_definition(self):
        assert extract_spans([0, 1, 1, 0, 2]) == [Span(1, 2, 1), Span(4, 4, 2)]

    def test_no_entities(self):
        assert extract_spans([0, 0, 0]) == []

    def test_adjacent_runs_split(self):
        assert extract_spans([1, 2, 2]) == [Span(0, 0, 1), Span(1, 2, 2)]

    def test_single_run_to_end(self):
        assert extract_spans([0, 3, 3, 3]) == [Span(1, 3, 3)]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=20))
    def test_union_and_disjointness(self, labels):
        spans = extract_spans(labels)
        covered = {}
        for span in spans:
            assert span.start <= span.end
            for i in range(span.start, span.end + 1):
                assert i not in covered, "spans overlap"
                covered[i] = span.label
        nonzero = {i: lab for i, lab in enumerate(labels) if lab != 0}
        assert covered == nonzero
        starts = [s.start for s in spans]
        assert starts == sorted(starts)
        # maximality: the position before each span differs from its label
        for span in spans:
            if span.start > 0:
                assert labels[span.start - 1] != span.label


class TestVocab:
    def test_min_count_two(self):
        corpus = parse("a\tO\na\tO\nb\tO\n\n", label_set=LabelSet(["X"]))
        vocab = build_vocab(corpus, min_count=2)
        assert vocab.encode("a") != Vocab.UNK
        assert vocab.encode("b") == Vocab.UNK

    def test_min_count_one_indexes_everything(self):
        corpus = parse("a\tO\nb\tO\nc\tO\n\n", label_set=LabelSet(["X"]))
        vocab = build_vocab(corpus, min_count=1)
        assert {vocab.encode(w) for w in "abc"} & {Vocab.UNK, Vocab.PAD} == set()

    def test_case_folding(self):
        corpus = parse("The\tO\nthe\tO\n\n", label_set=LabelSet(["X"]))
        vocab = build_vocab(corpus, min_count=2)
        assert vocab.encode("THE") == vocab.encode("the")
        assert vocab.size == 3  # pad, unk, "the"

    def test_reserved_indices_distinct_and_dense(self):
        corpus = parse("b\tO\na\tO\na\tO\n\n", label_set=LabelSet(["X"]))
        vocab = build_vocab(corpus)
        assert Vocab.PAD != Vocab.UNK
        indices = sorted(vocab.word_to_index.values())
        assert indices == list(range(vocab.size))


class TestCorpusStructure:
    def test_flat_indexing(self):
        corpus = parse("a\tO\nb\tO\n\nc\tO\n\n", label_set=LabelSet(["X"]))
        assert corpus.n_tokens == 3
        ref = corpus.ref_of(2)
        assert (ref.sentence_idx, ref.token_idx) == (1, 0)
        assert corpus.flat_index(ref) == 2

    def test_label_out_of_range(self):
        with pytest.raises(FormatError):
            Corpus([Sentence((Token("a", 2),))], LabelSet(["X"]))
