import json
import math

import numpy as np
import pytest

from tweakboost import (
    MODEL_VERSION,
    alpha,
    ensemble_margins,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_ensemble,
    save_model,
    staged_predictions,
    train_adaboost,
    update_weights,
    weight_trajectory,
)
from tweakboost import make_dataset

from conftest import desk_ensemble, random_learnable_dataset, stump


# -------------------------------------------------- stage weight

def test_alpha_matches_closed_form_on_grid():
    for i in range(1, 100):
        err = i / 100.0
        want = math.log((1.0 - err) / err)
        assert abs(alpha(err) - want) <= 1e-12
        assert abs(alpha(err, n_classes=3) - (want + math.log(2.0))) <= 1e-12


def test_alpha_known_points():
    assert alpha(0.25) == pytest.approx(math.log(3.0), abs=1e-15)
    assert alpha(0.5) == 0.0
    assert alpha(0.75) == pytest.approx(-math.log(3.0), abs=1e-15)


def test_alpha_clamps_instead_of_blowing_up():
    hi = alpha(0.0)
    assert math.isfinite(hi)
    assert hi == pytest.approx(math.log((1 - 1e-10) / 1e-10))
    lo = alpha(1.0)
    assert math.isfinite(lo) and lo < 0
    assert alpha(1e-300) == hi


# -------------------------------------------------- reweighting

def test_update_weights_worked_example():
    w = np.full(4, 0.25)
    miss = np.array([True, False, False, False])
    out = update_weights(w, miss, math.log(3.0))
    want = np.array([0.5, 1 / 6, 1 / 6, 1 / 6])
    assert np.allclose(out, want, rtol=0, atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_update_weights_pre_normalization_factor():
    """Missed weights scale by exactly e^alpha before normalization: the
    library output times the independently computed normalizer must equal
    w_i * e^(alpha*miss_i)."""
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(3, 40))
        w = rng.uniform(0.01, 1.0, n)
        w /= w.sum()
        miss = rng.random(n) < 0.4
        if not miss.any() or miss.all():
            continue
        a = float(rng.uniform(0.05, 2.5))
        out = update_weights(w, miss, a)
        z = float((w * np.exp(a * miss)).sum())  # oracle normalizer
        np.testing.assert_allclose(out * z, w * np.exp(a * miss), rtol=1e-12)


def test_update_weights_directional_law():
    rng = np.random.default_rng(23)
    for _ in range(200):
        n = int(rng.integers(3, 60))
        w = rng.uniform(0.01, 1.0, n)
        w /= w.sum()
        miss = rng.random(n) < rng.uniform(0.1, 0.6)
        if not miss.any() or miss.all():
            continue
        a = float(rng.uniform(1e-3, 3.0))
        out = update_weights(w, miss, a)
        assert np.all(out[miss] > w[miss])
        assert np.all(out[~miss] < w[~miss])
        assert out.sum() == pytest.approx(1.0, abs=1e-9)


def test_update_weights_half_mass_identity():
    """With alpha from the observed error, the just-missed set always holds
    exactly half the normalized mass afterwards."""
    rng = np.random.default_rng(31)
    for _ in range(50):
        n = int(rng.integers(4, 50))
        w = rng.uniform(0.01, 1.0, n)
        w /= w.sum()
        miss = rng.random(n) < 0.3
        if not miss.any() or miss.all():
            continue
        err = float(w[miss].sum())
        if err >= 0.5:
            continue
        out = update_weights(w, miss, alpha(err))
        assert out[miss].sum() == pytest.approx(0.5, abs=1e-9)


# -------------------------------------------------- training loop

def test_train_is_deterministic(tiny_ds):
    e1 = train_adaboost(tiny_ds, K=5, max_depth=2)
    e2 = train_adaboost(tiny_ds, K=5, max_depth=2)
    assert model_to_dict(e1) == model_to_dict(e2)


def test_train_tracks_trajectories_and_errors():
    rng = np.random.default_rng(2)
    ds = random_learnable_dataset(rng, 80, 3)
    e = train_adaboost(ds, K=10, max_depth=2)
    assert e.trajectories.shape == (e.k + 1, 80)
    np.testing.assert_allclose(e.trajectories.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(e.trajectories[0], 1 / 80)
    assert all(0 <= err < 0.5 for err in e.staged_errors)
    assert len(e.alphas) == len(e.trees) == len(e.staged_errors) == e.k
    assert e.config == {"K": 10, "max_depth": 2, "seed": 0}


def test_train_halts_and_keeps_on_perfect_round(tiny_ds):
    e = train_adaboost(tiny_ds, K=10, max_depth=3)
    # tiny_ds separates cleanly, so the first round is perfect and kept
    assert e.k == 1
    assert e.staged_errors[0] == 0.0
    assert e.alphas[0] > 20  # clamped error, huge but finite stage weight
    assert math.isfinite(e.alphas[0])


def test_train_halts_and_discards_on_chance_round():
    # XOR: no depth-1 stump beats 0.5 weighted error
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([-1, -1, 1, 1])
    ds = make_dataset(X, y, ["a", "b"])
    e = train_adaboost(ds, K=5, max_depth=1)
    assert e.k == 0
    assert e.trajectories.shape == (1, 4)


def test_train_validates_inputs(tiny_ds):
    with pytest.raises(ValueError, match="K must be"):
        train_adaboost(tiny_ds, K=0, max_depth=2)
    X = np.array([[1.0], [2.0]])
    one_class = make_dataset(X, [1, 1], ["a"])
    with pytest.raises(ValueError, match="absent"):
        train_adaboost(one_class, K=3, max_depth=1)


def test_weight_trajectory_rounds(tiny_ds):
    rng = np.random.default_rng(4)
    ds = random_learnable_dataset(rng, 30, 2)
    e = train_adaboost(ds, K=6, max_depth=2)
    w = weight_trajectory(e, 3)
    assert w.shape == (e.k + 1,)
    assert w[0] == pytest.approx(1 / 30)
    with pytest.raises(IndexError):
        weight_trajectory(e, 30)
    with pytest.raises(IndexError):
        weight_trajectory(e, -1)


# -------------------------------------------------- voting

def test_predict_ensemble_margin_is_weighted_vote():
    e = desk_ensemble([stump(0, 5.0, -1, 1), stump(1, 3.0, 1, -1)], [0.8, 0.3])
    x = np.array([7.0, 1.0])
    # tree0 votes +1, tree1 votes +1
    pred, m = predict_ensemble(e, x)
    assert pred == 1
    assert m == pytest.approx(1.1)
    pred1, m1 = predict_ensemble(e, x, upto=1)
    assert (pred1, m1) == (1, pytest.approx(0.8))


def test_zero_margin_resolves_negative():
    e = desk_ensemble([stump(0, 5.0, -1, 1), stump(0, 5.0, 1, -1)], [0.7, 0.7])
    pred, m = predict_ensemble(e, np.array([1.0, 1.0]))
    assert m == 0.0
    assert pred == -1


def test_predict_ensemble_validates_upto():
    e = desk_ensemble([stump(0, 5.0, -1, 1)], [1.0])
    with pytest.raises(ValueError):
        predict_ensemble(e, np.array([1.0, 1.0]), upto=0)
    with pytest.raises(ValueError):
        predict_ensemble(e, np.array([1.0, 1.0]), upto=2)


def test_predict_ensemble_checks_arity():
    e = desk_ensemble([stump(0, 5.0, -1, 1)], [1.0])
    with pytest.raises(ValueError, match="shape"):
        predict_ensemble(e, np.array([1.0, 2.0, 3.0]))


def test_ensemble_margins_matches_scalar_path():
    rng = np.random.default_rng(8)
    ds = random_learnable_dataset(rng, 50, 4)
    e = train_adaboost(ds, K=8, max_depth=3)
    batch = ensemble_margins(e, ds.rows)
    single = np.array([predict_ensemble(e, x)[1] for x in ds.rows])
    np.testing.assert_allclose(batch, single, atol=1e-12)
    batch5 = ensemble_margins(e, ds.rows, upto=min(5, e.k))
    single5 = np.array([predict_ensemble(e, x, upto=min(5, e.k))[1] for x in ds.rows])
    np.testing.assert_allclose(batch5, single5, atol=1e-12)


def test_staged_predictions_shape(tiny_ds):
    rng = np.random.default_rng(9)
    ds = random_learnable_dataset(rng, 40, 2)
    e = train_adaboost(ds, K=7, max_depth=2)
    sp = staged_predictions(e, ds.rows[0])
    assert sp.shape == (e.k,)
    assert set(np.unique(sp)) <= {-1, 1}


# -------------------------------------------------- serialization

def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    ds = random_learnable_dataset(rng, 60, 3)
    e = train_adaboost(ds, K=6, max_depth=2, seed=11)
    path = tmp_path / "m.json"
    save_model(e, path)
    back = load_model(path)
    assert model_to_dict(back) == model_to_dict(e)
    # byte-stable rewrite
    save_model(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_model_dict_key_order(tiny_ds):
    e = train_adaboost(tiny_ds, K=2, max_depth=1)
    d = model_to_dict(e)
    assert list(d.keys()) == [
        "version", "schema", "alphas", "trees", "trajectories",
        "staged_errors", "config",
    ]
    assert d["version"] == MODEL_VERSION
    assert list(d["config"].keys()) == ["K", "max_depth", "seed"]


def test_model_version_check(tmp_path, tiny_ds):
    e = train_adaboost(tiny_ds, K=2, max_depth=1)
    d = model_to_dict(e)
    d["version"] = "tweakboost-model/2"
    with pytest.raises(ValueError, match="version"):
        model_from_dict(d)


def test_save_model_is_atomic(tmp_path, tiny_ds):
    e = train_adaboost(tiny_ds, K=2, max_depth=1)
    path = tmp_path / "m.json"
    save_model(e, path)
    leftovers = [p for p in tmp_path.iterdir() if p.name != "m.json"]
    assert leftovers == []
    json.loads(path.read_text())
