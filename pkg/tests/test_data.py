import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greywave.data import (
    DataError,
    RatingMatrix,
    UserLabelSet,
    compute_item_stats,
    load_labels,
    load_ratings,
    sample_genuine,
    save_labels,
    save_ratings,
)
from greywave.synthetic import SyntheticConfig, synthetic_genuine


def write(tmp_path, name, text, encoding="utf-8"):
    p = tmp_path / name
    p.write_text(text, encoding=encoding)
    return p


def test_generic_single_row(tmp_path):
    m = load_ratings(write(tmp_path, "r.csv", "u1,i1,7\n"))
    assert (m.n_users, m.n_items, len(m)) == (1, 1, 1)
    assert m.get("u1", "i1") == 7


def test_generic_with_header_and_duplicates_keep_last(tmp_path):
    m = load_ratings(write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,i1,3\nu1,i1,8\nu2,i1,5\n"))
    assert m.get("u1", "i1") == 8 and len(m) == 2


def test_generic_out_of_scale(tmp_path):
    with pytest.raises(DataError, match="rating out of scale"):
        load_ratings(write(tmp_path, "r.csv", "u1,i1,12\n"))


def test_malformed_row_names_line(tmp_path):
    with pytest.raises(DataError, match=":3:"):
        load_ratings(write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,i1,3\nu2,i1\n"))


def test_empty_file(tmp_path):
    with pytest.raises(DataError):
        load_ratings(write(tmp_path, "r.csv", ""))


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_ratings(tmp_path / "nope.csv")


def test_bookcrossing_drops_implicit(tmp_path):
    text = '"User-ID";"ISBN";"Book-Rating"\n"1";"034545104X";"0"\n"2";"0155061224";"5"\n"3";"0446520802";"10"\n'
    m = load_ratings(write(tmp_path, "bx.csv", text, "latin-1"), "bookcrossing")
    assert len(m) == 2
    assert m.get("2", "0155061224") == 5
    assert m.get("1", "034545104X") is None


def test_bookcrossing_bad_rating(tmp_path):
    text = '"User-ID";"ISBN";"Book-Rating"\n"1";"x";"11"\n'
    with pytest.raises(DataError, match="rating out of scale"):
        load_ratings(write(tmp_path, "bx.csv", text), "bookcrossing")


def test_hetrec_rescales_half_stars(tmp_path):
    text = "userID\tmovieID\trating\tdate_day\n75\t3\t0.5\t29\n75\t32\t4.5\t29\n76\t3\t5\t1\n"
    m = load_ratings(write(tmp_path, "h.dat", text), "hetrec")
    assert m.get("75", "3") == 1 and m.get("75", "32") == 9 and m.get("76", "3") == 10


def test_unknown_format(tmp_path):
    with pytest.raises(DataError):
        load_ratings(write(tmp_path, "r.csv", "u,i,1\n"), "parquet")


def test_save_load_roundtrip(tmp_path):
    m = synthetic_genuine(3, SyntheticConfig(n_users=30, n_items=80))
    save_ratings(m, tmp_path / "r.csv")
    assert load_ratings(tmp_path / "r.csv") == m


def test_item_stats_population_std():
    m = RatingMatrix({("a", "x"): 2, ("b", "x"): 4, ("c", "x"): 6, ("a", "y"): 9})
    s = compute_item_stats(m)
    assert s.item_mean("x") == 4.0
    assert s.item_std("x") == pytest.approx(math.sqrt(8 / 3), abs=1e-12)
    assert s.item_std("x") == pytest.approx(1.63299, abs=1e-5)
    assert s.popularity("y") == 1 and s.item_std("y") == 0.0
    assert s.system_mean == pytest.approx(21 / 4)


def test_item_stats_unrated_item_uses_system_values():
    m = RatingMatrix({("a", "x"): 2, ("b", "x"): 6}, items=["x", "z"])
    s = compute_item_stats(m)
    assert s.popularity("z") == 0
    assert s.item_mean("z") == s.system_mean == 4.0
    assert s.item_std("z") == s.system_std == 2.0


def test_item_stats_empty_matrix():
    with pytest.raises(DataError):
        compute_item_stats(RatingMatrix({}, users=["a"], items=["x"]))


def test_sample_full_and_deterministic(toy):
    assert set(sample_genuine(toy, toy.n_users, 5).users) == set(toy.users)
    m = synthetic_genuine(2, SyntheticConfig(n_users=40, n_items=100))
    a, b = sample_genuine(m, 3, 7), sample_genuine(m, 3, 7)
    assert a.users == b.users and a == b


def test_sample_restricts_items_and_rejects_oversize():
    m = synthetic_genuine(2, SyntheticConfig(n_users=40, n_items=100))
    s = sample_genuine(m, 5, 1)
    assert s.n_users == 5
    rated = {i for _, i in s.ratings}
    assert set(s.items) == rated
    with pytest.raises(DataError):
        sample_genuine(m, 41, 1)


def test_synthetic_800_meets_pool_conditions():
    m = synthetic_genuine(1)
    s = compute_item_stats(m)
    assert m.n_users == 800
    assert (s.count > 200).sum() >= 10
    assert (s.count == 1).sum() >= 10


def test_labels_roundtrip(tmp_path):
    labels = UserLabelSet(frozenset({"g1", "g2"}), frozenset({"~atk0"}))
    save_labels(labels, tmp_path / "l.csv")
    assert load_labels(tmp_path / "l.csv") == labels


def test_labels_disjoint():
    with pytest.raises(DataError):
        UserLabelSet(frozenset({"a"}), frozenset({"a"}))


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.tuples(st.sampled_from("abcde"), st.sampled_from("vwxyz")), st.integers(1, 10), min_size=1))
def test_dense_view_matches_store(ratings):
    m = RatingMatrix(ratings)
    for (u, i), r in ratings.items():
        assert m.values[m.user_index[u], m.item_index[i]] == r
    assert m.mask.sum() == len(ratings)
    assert np.all(m.values[~m.mask] == 0)
