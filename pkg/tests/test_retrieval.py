import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tests.oracles import full_sort_topk
from varclr.checkpoint import Checkpoint
from varclr.encoders import AvgEncoder, l2_normalize
from varclr.evaluation import BenchmarkPair, levenshtein
from varclr.retrieval import (
    KEYBOARD_NEIGHBORS,
    SearchIndex,
    build_index,
    filter_similar_pairs,
    hit_at_k,
    keyboard_typo,
    make_typos,
    search,
)
from varclr.tokenizer import BpeVocab, is_valid_name


class TableModel:
    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}

    def encode_names(self, names):
        return np.array([self.table[n] for n in names])


def random_model(rng, n, d, quantize=False):
    names = [f"n{i}" for i in range(n)]
    vecs = rng.normal(size=(n, d))
    if quantize:
        # few distinct directions so ties actually occur
        vecs = rng.integers(-1, 2, size=(n, d)).astype(float)
        vecs[np.all(vecs == 0, axis=1), 0] = 1.0
    return names, TableModel(dict(zip(names, vecs)))


class TestBuildIndex:
    def test_single(self):
        idx = build_index(["a"], TableModel({"a": [3.0, 4.0]}))
        assert idx.vectors.shape == (1, 2)
        assert np.linalg.norm(idx.vectors[0]) == pytest.approx(1.0)

    def test_duplicates(self):
        idx = build_index(["a", "a", "b"], TableModel({"a": [1, 0], "b": [0, 1]}))
        assert idx.names == ["a", "b"]

    def test_invalid_dropped(self):
        idx = build_index(["a", "$x", "___", "b"], TableModel({"a": [1, 0], "b": [0, 1]}))
        assert idx.names == ["a", "b"] and idx.dropped == 2

    def test_empty(self):
        with pytest.raises(ValueError):
            build_index(["$"], TableModel({}))


class TestSearch:
    def test_self_first(self):
        rng = np.random.default_rng(0)
        names, model = random_model(rng, 20, 4)
        idx = build_index(names, model)
        top = search(idx, "n7", 3)
        assert top[0][0] == "n7" and top[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_full_permutation(self):
        names, model = random_model(np.random.default_rng(1), 15, 3)
        idx = build_index(names, model)
        assert sorted(n for n, _ in search(idx, "n0", 15)) == sorted(names)

    def test_k_range(self):
        names, model = random_model(np.random.default_rng(1), 5, 3)
        idx = build_index(names, model)
        with pytest.raises(ValueError):
            search(idx, "n0", 0)
        with pytest.raises(ValueError):
            search(idx, "n0", 6)
        with pytest.raises(ValueError):
            search(idx, "n0", 5, exclude_query=True)

    def test_exclude_query(self):
        names, model = random_model(np.random.default_rng(2), 10, 3)
        idx = build_index(names, model)
        assert "n3" not in [n for n, _ in search(idx, "n3", 9, exclude_query=True)]

    def test_against_full_sort(self):
        rng = np.random.default_rng(3)
        for trial in range(100):
            n = int(rng.integers(1, 200))
            names, model = random_model(rng, n, int(rng.integers(1, 6)), quantize=trial % 2 == 0)
            idx = build_index(names, model)
            q = names[int(rng.integers(0, n))]
            k = int(rng.integers(1, n + 1))
            got = [name for name, _ in search(idx, q, k)]
            assert got == full_sort_topk(idx.names, idx.vectors, idx.vectors[idx.position(q)], k)


class TestHitAtK:
    def test_self_targets(self):
        names, model = random_model(np.random.default_rng(0), 30, 4)
        idx = build_index(names, model)
        curve = hit_at_k(idx, [(n, n) for n in names], ks=[1, 5, 30])
        assert curve.hits == [1.0, 1.0, 1.0]

    def test_adversarial(self):
        # every target is the single farthest vector from its query
        table = {"q": [1.0, 0.0], "t": [-1.0, 0.0], "m1": [0.9, 0.1], "m2": [0.8, 0.3], "m3": [0.1, 1.0]}
        idx = build_index(list(table), TableModel(table))
        curve = hit_at_k(idx, [("q", "t")], ks=[1, 2, 3, 4, 5])
        assert curve.hits == [0.0, 0.0, 0.0, 0.0, 1.0]

    def test_clusters_against_full_sort(self):
        rng = np.random.default_rng(4)
        centers = rng.normal(size=(3, 5))
        table = {f"c{c}_{i}": centers[c] + 0.3 * rng.normal(size=5) for c in range(3) for i in range(20)}
        idx = build_index(list(table), TableModel(table))
        names = list(table)
        queries = [(names[i], names[(i + 1) % 60]) for i in range(60)]
        ks = [1, 2, 5, 10, 20, 60]
        curve = hit_at_k(idx, queries, ks)
        for k, h in zip(ks, curve.hits):
            expected = np.mean([t in full_sort_topk(idx.names, idx.vectors, idx.vectors[idx.position(q)], k)
                                for q, t in queries])
            assert h == pytest.approx(expected)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 60), st.integers(0, 2 ** 32 - 1), st.booleans(), st.booleans())
    def test_oracle_monotone_terminal(self, n, seed, exclude, quantize):
        rng = np.random.default_rng(seed)
        names, model = random_model(rng, n, 3, quantize=quantize)
        idx = build_index(names, model)
        queries = [(names[int(rng.integers(0, n))], names[int(rng.integers(0, n))]) for _ in range(10)]
        ks = list(range(1, n + 2))
        curve = hit_at_k(idx, queries, ks, exclude_query=exclude)
        assert all(a <= b for a, b in zip(curve.hits, curve.hits[1:]))
        assert curve.hits[-1] == 1.0
        for k in (1, max(1, n // 2)):
            expected = []
            for q, t in queries:
                excl = q if exclude and q != t else None
                expected.append(t in full_sort_topk(idx.names, idx.vectors, model.encode_names([q])[0]
                                                    / np.linalg.norm(model.encode_names([q])[0]), k, excl))
            assert curve.hits[k - 1] == pytest.approx(np.mean(expected))

    def test_missing_target(self):
        idx = build_index(["a"], TableModel({"a": [1.0]}))
        with pytest.raises(ValueError):
            hit_at_k(idx, [("a", "zz")], [1])

    def test_csv(self, tmp_path):
        idx = build_index(["a", "b"], TableModel({"a": [1.0, 0], "b": [0, 1.0]}))
        hit_at_k(idx, [("a", "b")], [1, 2]).to_csv(tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text() == "k,hit_rate\n1,0\n2,1\n"


class TestFilter:
    pairs = [BenchmarkPair("a", "b", similarity=0.41), BenchmarkPair("c", "d", similarity=0.4),
             BenchmarkPair("e", "f", similarity=1.0), BenchmarkPair("g", "h", relatedness=0.9)]

    def test_threshold(self):
        assert filter_similar_pairs(self.pairs, 0.4) == [("a", "b"), ("e", "f")]
        assert filter_similar_pairs(self.pairs, 1.0) == []
        assert len(filter_similar_pairs(self.pairs, -1)) == 3

    def test_both_directions(self):
        assert filter_similar_pairs(self.pairs[:1], 0.4, both_directions=True) == [("a", "b"), ("b", "a")]


class TestTypos:
    pool = ["similarity", "minSimilarity", "temperatures", "programmable", "fileList",
            "x", "a1", "idx_to_word", "HTMLParser", "count2"]

    def test_structure(self):
        typos = make_typos(self.pool, len(self.pool), seed=3)
        assert sorted(t.correct for t in typos) == sorted(self.pool)
        for t in typos:
            assert t.misspelled != t.correct
            assert is_valid_name(t.misspelled)
            d = levenshtein(t.misspelled, t.correct)
            assert d == 1 or (d == 2 and sorted(t.misspelled) == sorted(t.correct))

    def test_deterministic(self):
        assert make_typos(self.pool, 5, seed=9) == make_typos(self.pool, 5, seed=9)
        assert make_typos(self.pool, 5, seed=9) != make_typos(self.pool, 5, seed=10)

    def test_insertion_shape(self):
        import random
        rng = random.Random(0)
        seen = {keyboard_typo("similarity", rng) for _ in range(3000)}
        assert "similkarity" in seen  # k neighbours l and is inserted right after it
        assert all(levenshtein(s, "similarity") <= 2 for s in seen)

    @settings(max_examples=200)
    @given(st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,12}", fullmatch=True).filter(
        lambda s: any(c.isalpha() for c in s)), st.integers(0, 10 ** 6))
    def test_always_valid(self, name, seed):
        import random
        out = keyboard_typo(name, random.Random(seed))
        assert out != name
        assert all(c.isalnum() or c == "_" for c in out)

    def test_errors(self):
        with pytest.raises(ValueError):
            make_typos(["abc", "123"], 1)
        with pytest.raises(ValueError):
            make_typos(["abc"], 2)

    def test_neighbors(self):
        assert set(KEYBOARD_NEIGHBORS["a"]) == set("qwsz")
        assert set(KEYBOARD_NEIGHBORS["g"]) == set("tyfhvb")
        assert all(c in KEYBOARD_NEIGHBORS[n] for c, ns in KEYBOARD_NEIGHBORS.items() for n in ns)


def test_index_save_load(tmp_path):
    ck = Checkpoint(AvgEncoder(72, 4, rng=np.random.default_rng(0)), BpeVocab())
    idx = build_index(["alpha", "beta", "gamma", "$bad"], ck)
    idx.save(tmp_path / "i")
    again = SearchIndex.load(tmp_path / "i")
    assert again.names == idx.names and again.dropped == 1
    np.testing.assert_array_equal(again.vectors, idx.vectors)
    assert search(again, "alpha", 2) == search(idx, "alpha", 2)
    np.testing.assert_allclose(np.linalg.norm(again.vectors, axis=1), 1.0)
    assert np.allclose(again.vectors, l2_normalize(ck.encode_names(idx.names)))
