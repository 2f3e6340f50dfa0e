import csv
import random
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hierforest.text_cluster import (RAW_JW, SOUNDEX_JW, ClusterError, agglomerate, assign,
                                     cluster_labels, distance_matrix, elbow_k, jaro, jaro_winkler,
                                     read_labels, representation, soundex, within_cost)

from oracles import agglomerate_oracle, jaro_winkler_formula, soundex_nara

VECTORS = Path(__file__).parent / "data" / "soundex_vectors.csv"


def vectors():
    with open(VECTORS, newline="") as fh:
        return [(r["name"], r["code"]) for r in csv.DictReader(fh)]


def test_vector_file_is_oracle_output():
    rows = vectors()
    assert len(rows) == 20
    assert all(soundex_nara(n) == c for n, c in rows)


@pytest.mark.parametrize("name,code", vectors())
def test_soundex_vectors(name, code):
    assert soundex(name) == code


def test_soundex_examples():
    assert soundex("Robert") == soundex("Rupert") == "R163"
    assert soundex("A") == "A000"
    assert soundex("robert") == "R163"


def test_soundex_without_letters_is_flagged():
    for s in ("", "1234", "--"):
        code = soundex(s)
        assert code == "Z000" and code.flagged
    assert not soundex("Lee").flagged


@given(st.text(st.characters(min_codepoint=32, max_codepoint=126)))
def test_soundex_pattern(s):
    assert re.fullmatch(r"[A-Z][0-9]{3}", soundex(s))


@given(st.text("ABCDEFGHIJKLMNOPQRSTUVWXYZ", min_size=1, max_size=12))
def test_soundex_matches_oracle_on_random_words(s):
    assert soundex(s) == soundex_nara(s)


def test_jaro_winkler_basics():
    assert jaro_winkler("CRATE", "CRATE") == 1.0
    assert jaro_winkler("ABC", "XYZ") == 0.0
    assert jaro_winkler("", "") == 1.0
    assert jaro_winkler("", "A") == 0.0


def test_martha():
    got = jaro_winkler("MARTHA", "MARHTA")
    assert abs(got - jaro_winkler_formula("MARTHA", "MARHTA")) <= 1e-9
    # m = 6, t = 1, l = 3: jaro = 17/18, boosted by 0.3 * (1/18)
    assert got == pytest.approx(17 / 18 + 0.3 / 18, abs=1e-12)


def random_pairs(k=50, seed=0):
    rnd = random.Random(seed)
    pairs = []
    for _ in range(k):
        a = "".join(rnd.choice("ABCDEHRT") for _ in range(rnd.randint(1, 10)))
        b = list(a) if rnd.random() < 0.6 else [rnd.choice("ABCDEHRT") for _ in range(rnd.randint(1, 10))]
        for _ in range(rnd.randint(0, 3)):
            if b:
                i = rnd.randrange(len(b))
                b[i] = rnd.choice("ABCDEHRT")
        pairs.append((a, "".join(b)))
    return pairs


@pytest.mark.parametrize("a,b", random_pairs())
def test_jaro_winkler_matches_formula(a, b):
    assert abs(jaro_winkler(a, b) - jaro_winkler_formula(a, b)) <= 1e-9


@given(st.text("abcdeh", max_size=10), st.text("abcdeh", max_size=10))
def test_symmetry_and_range(a, b):
    assert jaro_winkler(a, b) == pytest.approx(jaro_winkler(b, a), abs=1e-12)
    assert 0.0 <= jaro_winkler(a, b) <= 1.0
    assert jaro_winkler(a, a) == 1.0


def test_prefix_scale_checked():
    with pytest.raises(ValueError):
        jaro_winkler("a", "b", prefix_scale=0.3)


def test_spelling_variants_share_representation():
    assert representation("Theft") == representation("Thft")
    dm = distance_matrix(["Theft", "Theft2"])
    assert dm.d[0, 1] == 0.0


def test_distance_matrix_against_oracle():
    labels = ["Larceny", "Theft", "Motor Vehicle", "Drug Possession"]
    dm = distance_matrix(labels, SOUNDEX_JW)
    reps = [" ".join(soundex_nara(w) for w in l.split()) for l in labels]
    for i in range(4):
        for j in range(4):
            expect = 0.0 if i == j else 1 - jaro_winkler_formula(reps[i], reps[j])
            assert abs(dm.d[i, j] - expect) <= 1e-12
    raw = distance_matrix(labels, RAW_JW)
    assert abs(raw.d[0, 1] - (1 - jaro_winkler_formula("larceny", "theft"))) <= 1e-12


@given(st.lists(st.text("abcxyz ", min_size=1, max_size=8), min_size=2, max_size=8, unique=True))
def test_distance_matrix_shape(labels):
    d = distance_matrix(labels, RAW_JW).d
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)


def test_duplicate_labels_rejected():
    with pytest.raises(ClusterError):
        distance_matrix(["a", "a"])


def leafsets(tree):
    sets = {i: frozenset([i]) for i in range(tree.n)}
    out = []
    for k, (a, b) in enumerate(tree.merges):
        sa, sb = sets[int(a)], sets[int(b)]
        out.append((sa, sb))
        sets[tree.n + k] = sa | sb
    return out


def random_matrix(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n))
    d = (a + a.T) / 2
    np.fill_diagonal(d, 0)
    return d


def test_two_and_three_points():
    t = agglomerate(np.array([[0, 0.3], [0.3, 0]]))
    assert t.merges.tolist() == [[0, 1]] and t.heights.tolist() == [0.3]
    d = np.array([[0, 0.1, 0.8], [0.1, 0, 0.9], [0.8, 0.9, 0]])
    assert agglomerate(d).merges[0].tolist() == [0, 1]
    with pytest.raises(ClusterError):
        agglomerate(np.zeros((1, 1)))


@pytest.mark.parametrize("seed", range(100))
def test_agglomerate_matches_oracle(seed):
    n = 5 if seed < 10 else 6
    d = random_matrix(n, seed)
    for linkage in ("average", "complete", "single"):
        tree = agglomerate(d, linkage)
        expect = agglomerate_oracle(d, linkage)
        got = leafsets(tree)
        assert [{a, b} for a, b in got] == [{a, b} for a, b, _ in expect]
        np.testing.assert_allclose(tree.heights, [h for _, _, h in expect], atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_ties_follow_lowest_slots(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(1, 3, (6, 6)).astype(float)
    d = np.triu(a, 1) + np.triu(a, 1).T
    for linkage in ("complete", "single"):
        got = [{x, y} for x, y in leafsets(agglomerate(d, linkage))]
        assert got == [{x, y} for x, y, _ in agglomerate_oracle(d, linkage)]


def test_cut_extremes():
    tree = agglomerate(random_matrix(7, 1))
    assert tree.cut(7).tolist() == list(range(1, 8))
    assert tree.cut(1).tolist() == [1] * 7
    ids = tree.cut(3)
    assert ids[0] == 1 and set(ids) == {1, 2, 3}


def block_matrix():
    d = np.full((8, 8), 0.9)
    d[:4, :4] = 0.05
    d[4:, 4:] = 0.05
    np.fill_diagonal(d, 0)
    return d


def test_elbow_two_groups():
    d = block_matrix()
    k, curve = elbow_k(agglomerate(d), d, 6)
    assert k == 2
    assert np.all(np.diff(curve) <= 1e-12)


def test_elbow_requires_three():
    d = block_matrix()
    with pytest.raises(ClusterError):
        elbow_k(agglomerate(d), d, 2)


def test_forced_k_and_assignment():
    labels = ["Larceny", "Larceny Suspect", "Theft", "Thft", "Drug", "Drugs", "Assault", "Asault"]
    m = cluster_labels(labels, k=4)
    assert m.k == 4 and set(m.assignment.values()) == {1, 2, 3, 4}
    for l in labels:
        assert assign(m, l) == m.assignment[l]
    for c, med in enumerate(m.medoids, start=1):
        assert assign(m, med) == c
    assert m.assignment["Theft"] == m.assignment["Thft"]


def test_assign_tie_goes_to_lowest_id():
    m = cluster_labels(["aaa", "bbb"], k=2, mode=RAW_JW)
    assert assign(m, "zzz") == 1


def test_elbow_three_blocks():
    d = np.full((9, 9), 0.9)
    for g in range(3):
        d[3 * g:3 * g + 3, 3 * g:3 * g + 3] = 0.05
    np.fill_diagonal(d, 0)
    k, curve = elbow_k(agglomerate(d), d, 6)
    assert k == 3
    assert curve[0] == pytest.approx(5.5)


def test_elbow_tie_takes_smaller_k():
    # three groups of identical codes: W = 1.5, 0.5, 0, ... gives equal
    # second differences at k = 2 and k = 3
    labels = ["hoodie", "hoody", "hudie", "jacket", "jakit", "jackett", "vest", "vesst", "veste"]
    m = cluster_labels(labels, k_max=6)
    np.testing.assert_allclose(m.curve, [1.5, 0.5, 0, 0, 0, 0], atol=1e-12)
    assert m.k == 2


def test_read_labels(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("id,reason\n1,Theft\n2,Drug\n3,Theft\n4,\n")
    assert read_labels(p, "reason") == ["Theft", "Drug"]
