"""BLEU / ROUGE-L / CIDEr against hand counts and brute-force oracles."""
import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavetransformer.metrics import (
    EvalPair,
    assemble_report,
    bleu_n,
    cider,
    lcs_length,
    ngram_counts,
    rouge_l,
    spider_from_scores,
)

W = lambda s: s.split()


class TestBleu:
    def test_identical_candidate_scores_one(self):
        pair = EvalPair(W("a dog barks at the mail van"), [W("a dog barks at the mail van")])
        for n in (1, 2, 3, 4):
            assert bleu_n([pair], n) == pytest.approx(1.0)

    def test_no_overlap_is_zero(self):
        pair = EvalPair(W("x y z"), [W("a b c")])
        assert bleu_n([pair], 1) == 0.0

    def test_hand_counted_clipping_case(self):
        # candidate "the the the" vs reference "the cat":
        # clipped unigram precision = 1/3; candidate (3) is longer than the
        # reference (2), so no brevity penalty applies
        pair = EvalPair(W("the the the"), [W("the cat")])
        assert bleu_n([pair], 1) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_hand_counted_brevity_penalty(self):
        # candidate "the" vs reference "the cat": precision 1, c=1 <= r=2,
        # BP = exp(1 - 2/1) = e^-1
        pair = EvalPair(W("the"), [W("the cat")])
        assert bleu_n([pair], 1) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_closest_reference_length_ties_to_shorter(self):
        # c=3; refs of length 2 and 4 are equally close -> r=2 -> no penalty
        pair = EvalPair(W("a b c"), [W("a b"), W("a b c d")])
        assert bleu_n([pair], 1) == pytest.approx(1.0)

    def test_corpus_level_pooling(self):
        # corpus counts pool before the ratio: (1 + 2) / (2 + 2)
        pairs = [
            EvalPair(W("a x"), [W("a b")]),
            EvalPair(W("c d"), [W("c d")]),
        ]
        got = bleu_n(pairs, 1)
        # c = 4, r = 4 -> BP = 1
        assert got == pytest.approx(3.0 / 4.0, abs=1e-12)

    def test_zero_higher_order_kills_score(self):
        pair = EvalPair(W("a b"), [W("b a")])
        assert bleu_n([pair], 1) > 0
        assert bleu_n([pair], 2) == 0.0


def exhaustive_lcs(a, b):
    """O(2^n) oracle: longest common subsequence by enumeration."""
    best = 0
    for r in range(len(a), 0, -1):
        for combo in itertools.combinations(range(len(a)), r):
            sub = [a[i] for i in combo]
            # is sub a subsequence of b?
            it = iter(b)
            if all(x in it for x in sub):
                return r
    return best


class TestRougeL:
    def test_identical_is_one(self):
        pair = EvalPair(W("water drips slowly"), [W("water drips slowly")])
        assert rouge_l([pair]) == pytest.approx(1.0)

    def test_disjoint_is_zero(self):
        pair = EvalPair(W("a b"), [W("x y")])
        assert rouge_l([pair]) == 0.0

    def test_hand_case_with_exhaustive_lcs(self):
        cand, ref = W("a b c d"), W("a c b d")
        ell = lcs_length(cand, ref)
        assert ell == exhaustive_lcs(cand, ref) == 3
        p = r = 3 / 4
        beta2 = 1.2 ** 2
        expect = (1 + beta2) * p * r / (r + beta2 * p)
        assert rouge_l([EvalPair(cand, [ref])]) == pytest.approx(expect, abs=1e-12)
        assert expect == pytest.approx(0.75, abs=1e-12)  # P=R makes F=P

    @given(st.lists(st.sampled_from("abcd"), min_size=0, max_size=8),
           st.lists(st.sampled_from("abcd"), min_size=0, max_size=8))
    @settings(max_examples=150, deadline=None)
    def test_dp_matches_exhaustive_up_to_len8(self, a, b):
        assert lcs_length(a, b) == exhaustive_lcs(a, b)

    def test_max_over_references(self):
        pair = EvalPair(W("a b c"), [W("x y z"), W("a b c")])
        assert rouge_l([pair]) == pytest.approx(1.0)


def cider_oracle(corpus, max_n=4, sigma=6.0):
    """Brute-force tf-idf vector arithmetic, independent of the module."""
    n_items = len(corpus)
    dfs = [dict() for _ in range(max_n)]
    for pair in corpus:
        for n in range(1, max_n + 1):
            grams = set()
            for ref in pair.references:
                grams.update(ngram_counts(ref, n))
            for g in grams:
                dfs[n - 1][g] = dfs[n - 1].get(g, 0) + 1

    def vec(words, n):
        out = {}
        for g, c in ngram_counts(words, n).items():
            out[g] = c * max(0.0, math.log(n_items / (1.0 + dfs[n - 1].get(g, 0))))
        return out

    scores = []
    for pair in corpus:
        total = 0.0
        for ref in pair.references:
            pen = math.exp(-((len(pair.candidate) - len(ref)) ** 2) / (2 * sigma ** 2))
            for n in range(1, max_n + 1):
                h, r = vec(pair.candidate, n), vec(ref, n)
                nh = math.sqrt(sum(v * v for v in h.values()))
                nr = math.sqrt(sum(v * v for v in r.values()))
                if nh and nr:
                    dot = sum(min(h[g], r[g]) * r[g] for g in h if g in r)
                    total += pen * dot / (nh * nr)
        scores.append(10.0 * total / (max_n * len(pair.references)))
    return sum(scores) / len(scores)


class TestCider:
    def _three_item_corpus(self):
        # distinct vocabularies per item -> every n-gram has df = 1,
        # idf = ln(3/2) > 0, so scores are informative
        return [
            EvalPair(W("a dog barks loudly here"), [W("a dog barks loudly here")]),
            EvalPair(W("rain falls on tin"), [W("rain falls on tin")]),
            EvalPair(W("car engine idles"), [W("wind whistles past")]),
        ]

    def test_identical_with_unique_ngrams_maxes_at_ten_per_item(self):
        corpus = self._three_item_corpus()
        # oracle the per-item values: items 1 and 2 are exact matches
        full = cider(corpus)
        expect = cider_oracle(corpus)
        assert full == pytest.approx(expect, abs=1e-9)
        only_matches = cider(corpus[:2])
        # across a 2-item corpus idf = ln(2/2) = 0 for every gram: score 0
        assert only_matches == 0.0

    def test_perfect_matches_with_unique_ngrams_score_exactly_ten(self):
        corpus = [
            EvalPair(W("a dog barks loudly here"), [W("a dog barks loudly here")]),
            EvalPair(W("rain falls on tin"), [W("rain falls on tin")]),
            EvalPair(W("car engine idles today"), [W("car engine idles today")]),
        ]
        assert cider(corpus) == pytest.approx(10.0, abs=1e-9)

    def test_zero_overlap_is_zero(self):
        corpus = [
            EvalPair(W("p q r"), [W("x y z")]),
            EvalPair(W("k l m"), [W("n o w")]),
            EvalPair(W("d e f"), [W("g h i")]),
        ]
        assert cider(corpus) == 0.0

    def test_matches_brute_force_oracle_mixed_corpus(self):
        corpus = [
            EvalPair(W("a dog barks"), [W("a dog barks"), W("a hound bays")]),
            EvalPair(W("rain falls"), [W("rain falls hard"), W("rain is falling")]),
            EvalPair(W("a dog naps"), [W("the dog sleeps")]),
        ]
        assert cider(corpus) == pytest.approx(cider_oracle(corpus), abs=1e-9)

    def test_reorder_invariance(self):
        corpus = self._three_item_corpus()
        assert cider(corpus) == pytest.approx(cider(list(reversed(corpus))), abs=1e-12)


class TestReport:
    def test_spider_absent_without_spice(self):
        corpus = [EvalPair(W("a b"), [W("a b")])]
        report = assemble_report(corpus)
        assert report.spice is None and report.spider is None
        assert "spider" not in " ".join(report.lines())

    def test_spider_assembly_from_published_components(self):
        # CIDEr 24.7 and SPICE 9.9 on the x100 scale average to 17.3
        assert spider_from_scores(24.7, 9.9) == pytest.approx(17.3)

    def test_report_lines_stable(self):
        corpus = [EvalPair(W("a b c"), [W("a b d")])]
        r1 = assemble_report(corpus, spice=0.5)
        r2 = assemble_report(corpus, spice=0.5)
        assert r1.lines() == r2.lines()
        assert any(line.startswith("bleu_1=") for line in r1.lines())
        assert any(line.startswith("cider_x100=") for line in r1.lines())

    def test_self_evaluation_is_perfect(self):
        refs = [W("a dog barks at strangers"), W("water drips in the cave"), W("wind moves dry leaves")]
        corpus = [EvalPair(list(r), [list(r), W("something else entirely")]) for r in refs]
        report = assemble_report(corpus)
        for v in (report.bleu_1, report.bleu_2, report.bleu_3, report.bleu_4, report.rouge_l):
            assert v == pytest.approx(1.0)

    def test_scores_reorder_invariant(self):
        corpus = [
            EvalPair(W("a dog barks"), [W("a dog barks loudly")]),
            EvalPair(W("rain falls"), [W("rain drops fall")]),
            EvalPair(W("wind blows"), [W("wind blows hard")]),
        ]
        fwd = assemble_report(corpus)
        rev = assemble_report(list(reversed(corpus)))
        for attr in ("bleu_1", "bleu_4", "rouge_l", "cider"):
            assert getattr(fwd, attr) == pytest.approx(getattr(rev, attr), abs=1e-12)
