import json

import numpy as np
import pytest

from caparrot.adapter.backoff import BackoffState, backoff_tick
from caparrot.adapter.classifier import LABELS, classify, cross_validate, default_model, fit_forest
from caparrot.adapter.corpus import (CorpusError, generate_corpus, generate_windows, read_corpus,
                                     to_arrays, write_feature_corpus, write_sample_corpus)
from caparrot.adapter.features import SampleWindow, extract_features, features_from_arrays
from caparrot.adapter.forest import ForestModel, train_forest
from caparrot.adapter.paramdb import REP, REP_PARAMETERS, lookup_parameters
from caparrot.channel import Friis, Nakagami, RadioConfig, mean_rss_dbm, sample_rss
from caparrot.routing.params import ParameterSet

CFG = RadioConfig()


# -- features --------------------------------------------------------------------

def test_noiseless_fit_recovers_exponent():
    d = np.linspace(5.0, 220.0, 50)
    fv = features_from_arrays(mean_rss_dbm(Friis(2.75), CFG, d), d)
    assert fv.exponent == pytest.approx(2.75, abs=0.01)
    assert fv.intercept_db == pytest.approx(20.0 - 40.05, abs=0.01)
    assert fv.residual_std_db == pytest.approx(0.0, abs=1e-9)
    assert fv.mean_distance_m == pytest.approx(d.mean())


def test_fading_leaves_large_residuals():
    rng = np.random.default_rng(5)
    d = rng.uniform(5.0, 200.0, 10_000)
    fv = features_from_arrays(sample_rss(Nakagami(2.75, 2.0), CFG, d, rng=rng), d)
    assert fv.residual_std_db > 1.0


def test_window_not_ready_cases():
    w = SampleWindow(50)
    for _ in range(30):
        w.add(-60.0, 100.0)
    assert extract_features(w) is None  # single distance
    w2 = SampleWindow(50)
    for k in range(9):
        w2.add(-60.0 - k, 10.0 + k)
    assert extract_features(w2) is None  # too few
    w2.add(-70.0, 30.0)
    assert extract_features(w2) is not None
    with pytest.raises(ValueError):
        w2.add(-50.0, 0.0)


def test_window_is_a_ring():
    w = SampleWindow(3)
    for k in range(5):
        w.add(float(k), 1.0 + k)
    rss, dist = w.arrays()
    assert rss.tolist() == [2.0, 3.0, 4.0]


# -- forest ----------------------------------------------------------------------

def toy_set():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(200, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    return X, y


def test_forest_fits_separable_set():
    X, y = toy_set()
    m = train_forest(X, y, n_trees=15, max_depth=15, seed=1)
    assert (m.predict(X) == y).mean() == 1.0
    assert all(t.depth <= 15 for t in m.trees)


def test_forest_depth_cap_and_determinism():
    X, y = toy_set()
    a = train_forest(X, y, n_trees=10, max_depth=2, seed=3)
    b = train_forest(X, y, n_trees=10, max_depth=2, seed=3)
    assert all(t.depth <= 2 for t in a.trees)
    probe = np.random.default_rng(9).uniform(-1, 1, size=(500, 2))
    assert np.array_equal(a.predict(probe), b.predict(probe))
    assert a.to_dict() == b.to_dict()


def test_forest_single_class_rejected():
    X, _ = toy_set()
    with pytest.raises(ValueError):
        train_forest(X, np.zeros(len(X), dtype=int))


def test_forest_file_round_trip(tmp_path):
    X, y = toy_set()
    m = train_forest(X, y, n_trees=5, seed=2, classes=["neg", "pos"], feature_names=["a", "b"])
    path = tmp_path / "m.json"
    m.save(path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "caparrot-forest" and doc["n_trees"] == 5
    back = ForestModel.load(path)
    assert np.array_equal(back.predict(X), m.predict(X))
    assert back.predict_one(X[0]) == m.predict_one(X[0])


def test_vote_ties_go_to_lowest_label():
    X = np.array([[0.0], [1.0]])
    y = np.array([0, 1])
    m = train_forest(X, y, n_trees=2, seed=0)
    votes = m.votes(np.array([[0.5]]))[0]
    if votes[0] == votes[1]:
        assert m.predict_one([0.5]) == 0


# -- classifier --------------------------------------------------------------------

@pytest.fixture(scope="module")
def model():
    return default_model()


def fresh_window(channel, seed):
    (_, rss, dist), = generate_windows([channel], 1, seed)
    return features_from_arrays(rss, dist)


@pytest.mark.parametrize("channel", ["rural", "suburban", "urban"])
def test_classifier_recognises_prototypes(model, channel):
    hits = sum(classify(model, fresh_window(channel, 1000 + k)) == REP(channel) for k in range(20))
    assert hits >= 18


def test_noiseless_friis_is_rural(model):
    d = np.random.default_rng(2).uniform(5.0, 230.0, 50)
    assert classify(model, features_from_arrays(mean_rss_dbm(Friis(2.75), CFG, d), d)) == REP.RURAL


def test_forest_oob_on_synthetic_corpus(model):
    assert model.oob_accuracy >= 0.9
    assert model.n_trees == 100 and model.max_depth == 15


def test_cross_validation_limits():
    X, y = to_arrays(generate_corpus(LABELS, 30, seed=4))
    dup_X = np.repeat(X[[0, 30, 60]], 10, axis=0)
    dup_y = np.repeat(y[[0, 30, 60]], 10)
    assert cross_validate(dup_X, dup_y, folds=10, models=("forest", "svm"))["forest"] == 1.0
    with pytest.raises(ValueError):
        cross_validate(X[:5], y[:5], folds=10)
    with pytest.raises(ValueError):
        cross_validate(X, np.zeros_like(y))
    with pytest.raises(ValueError):
        cross_validate(X, y, models=("knn",))


def test_permuted_labels_fall_to_chance():
    X, y = to_arrays(generate_corpus(LABELS, 200, seed=8))
    y = np.random.default_rng(0).permutation(y)
    acc = cross_validate(X, y, folds=10, models=("forest",), seed=1)["forest"]
    assert acc == pytest.approx(1 / 3, abs=0.05)


# -- corpus ------------------------------------------------------------------------

def test_corpus_is_seeded_and_counted(tmp_path):
    rows = generate_corpus(LABELS, 7, seed=3)
    assert len(rows) == 21
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_feature_corpus(rows, a)
    write_feature_corpus(generate_corpus(LABELS, 7, seed=3), b)
    assert a.read_bytes() == b.read_bytes()
    assert read_corpus(a) == rows


def test_sample_corpus_rebuilds_windows(tmp_path):
    wins = list(generate_windows(["urban", "rural"], 3, seed=1))
    path = tmp_path / "raw.csv"
    write_sample_corpus(wins, path)
    rows = read_corpus(path)
    assert [r[0] for r in rows] == ["urban"] * 3 + ["rural"] * 3
    assert rows[0][1] == features_from_arrays(wins[0][1], wins[0][2])


@pytest.mark.parametrize("text, row", [
    ("label,rss_dbm,distance_m\nrural,-60,10\nforest,-60,10\n", 3),
    ("label,rss_dbm,distance_m\nrural,-60,0\n", 2),
    ("label,rss_dbm,distance_m\nrural,abc,10\n", 2),
    ("a,b\n", 1),
])
def test_corpus_errors_report_rows(tmp_path, text, row):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(CorpusError) as err:
        read_corpus(path)
    assert err.value.row == row


# -- backoff / parameters ------------------------------------------------------------

def test_backoff_hand_trace():
    s = BackoffState(4, 4, REP.RURAL)
    for _ in range(3):
        s, p = backoff_tick(s, lambda: pytest.fail("checked too early"))
        assert p is None
    assert s.counter == 1
    s, p = backoff_tick(s, lambda: REP.RURAL)
    assert (s.window, s.counter, p) == (8, 8, None)


def test_backoff_change_resets_window():
    s, p = backoff_tick(BackoffState(16, 1, REP.RURAL), lambda: REP.URBAN)
    assert (s.window, s.counter, s.label) == (1, 1, REP.URBAN)
    assert p == REP_PARAMETERS[REP.URBAN]


def test_backoff_not_ready_retries_after_window():
    s, p = backoff_tick(BackoffState(8, 1, REP.RURAL), lambda: None)
    assert (s.window, s.counter, s.label, p) == (8, 8, REP.RURAL, None)


def test_backoff_growth_caps():
    s = BackoffState(1, 1, REP.RURAL)
    windows = []
    for _ in range(9):
        while s.counter > 1:
            s, _ = backoff_tick(s, lambda: REP.RURAL)
        s, _ = backoff_tick(s, lambda: REP.RURAL)
        windows.append(s.window)
    assert windows == [2, 4, 8, 16, 32, 64, 64, 64, 64]


def test_backoff_state_validation():
    with pytest.raises(ValueError):
        BackoffState(window=0)
    with pytest.raises(ValueError):
        BackoffState(window=4, counter=5)


def test_parameter_table():
    assert lookup_parameters(REP_PARAMETERS, "rural") == ParameterSet(-5.0, 0.5, 0.8, 1, 1)
    assert lookup_parameters(REP_PARAMETERS, REP.SUBURBAN) == ParameterSet(600.0, 0.2, 0.2, 3, 2)
    assert lookup_parameters(REP_PARAMETERS, "urban") == ParameterSet(20.0, 0.6, 0.3, 1, 2)
    assert set(REP_PARAMETERS) == set(REP)
    with pytest.raises(TypeError):
        REP_PARAMETERS[REP.RURAL] = ParameterSet()
