import math

import pytest

pimoe = pytest.importorskip("pimoe")


def test_metrics_hand_case():
    m = pimoe.compute_metrics([99.0, 91.0], [100.0, 90.0])
    assert m["rmse"] == pytest.approx(1.0, abs=1e-12)
    assert m["mape_percent"] == pytest.approx(1.0556, abs=5e-5)
    assert m["r2"] == pytest.approx(0.96, abs=1e-12)


def test_stat_features():
    s = pimoe.stat_features([1, 2, 3, 4, 5])
    assert s["mean"] == 3.0
    assert s["var"] == pytest.approx(2.5)
    assert s["kurt"] == pytest.approx(-1.912)


def test_gating_and_cv():
    w = pimoe.gate_weights([0.5, 2.0, 1.0, -1.0, 0.0], 2)
    assert sum(w) == pytest.approx(1.0, abs=1e-12)
    assert w[1] == pytest.approx(math.e / (math.e + 1.0))
    assert sum(x > 0 for x in w) == 2
    cv = pimoe.importance_cv_loss([[1, 0, 0, 0, 0], [1, 0, 0, 0, 0]])
    assert cv == pytest.approx(0.64 / 10.16, abs=1e-12)


def test_poly_baseline_is_exact_on_a_cubic():
    f = lambda x: 0.98 - 0.01 * x + 0.003 * x**2 - 0.0004 * x**3
    history = [f(i / 50) for i in range(1, 51)]
    forecast = pimoe.poly_baseline(history, 3, 10)
    for k, y in enumerate(forecast, start=1):
        assert y == pytest.approx(f((50 + k) / 50), abs=1e-8)


def test_errors_carry_codes():
    with pytest.raises(pimoe.PimoeError, match="ShapeError"):
        pimoe.compute_metrics([1.0], [1.0, 2.0])
    with pytest.raises(pimoe.PimoeError):
        pimoe.synth("/tmp/unused", {"no_such_key": 1})


def test_tsne_runs():
    pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]]
    emb, kl = pimoe.tsne(pts, perplexity=1.5, iterations=300, seed=1)
    assert len(emb) == 6 and all(len(r) == 2 for r in emb)
    assert kl[-1] < kl[0]


def test_synth_train_predict_roundtrip(tmp_path):
    ids = pimoe.synth(tmp_path / "data", {"n_batteries": 3, "seed": 2})
    assert len(ids) == 3
    config = {"epochs": 2, "model": {"horizon": 5, "expert_hidden": 8, "lstm_hidden": 8}}
    model = pimoe.train(tmp_path / "data", config, ids[:2])
    assert model.horizon == 5
    assert pimoe.model_config(model)["horizon"] == 5

    p = model.predict(str(tmp_path / "data"), ids[2], 10)
    assert len(p["soh"]) == 5
    assert all(math.isfinite(s) for s in p["soh"])

    model.save(str(tmp_path / "m.ckpt"))
    back = pimoe.load(tmp_path / "m.ckpt")
    assert back.predict(str(tmp_path / "data"), ids[2], 10)["soh"] == p["soh"]

    report = pimoe.evaluate(back, tmp_path / "data", [ids[2]])
    assert report["batteries"][0]["battery_id"] == ids[2]
