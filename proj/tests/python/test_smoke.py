import math

import numpy as np
import pytest

import skycast


def test_grade_catalog_is_contiguous():
    gs = skycast.grades()
    assert [g["name"] for g in gs][0] == "Good"
    assert gs[0]["color"] == "#00E400"
    assert gs[-1]["aqi_hi"] is None
    for a, b in zip(gs, gs[1:]):
        assert b["aqi_lo"] == a["aqi_hi"] + 1


def test_aqi_sub_index_and_grading():
    assert skycast.sub_index("pm25", 0.0) == 0.0
    assert skycast.sub_index("pm25", 45.0) == pytest.approx(101 + 49 * 9.5 / 19.9)
    record = {"pm25": 35, "pm10": 103, "o3": 9, "co": 2.7, "no2": 45}
    assert skycast.composite_aqi(record) == pytest.approx(51 + 49 * 25.9 / 26.3)
    assert skycast.grade_of_aqi(110) == "Unhealthy for Sensitive Groups"


def test_errors_carry_codes():
    with pytest.raises(skycast.SkycastError) as e:
        skycast.sub_index("pm25", -1.0)
    assert e.value.code == "NegativeConcentration"
    with pytest.raises(skycast.SkycastError) as e:
        skycast.shape_chain("C(6)(5)-X", 64, 64)
    assert e.value.code == "SyntaxError"
    assert isinstance(e.value, ValueError)


def test_gabor_kernels_zero_mean_unit_norm():
    even, odd = skycast.gabor_kernels(math.pi / 4, 0.1)
    assert even.shape == odd.shape
    assert abs(even.sum()) < 1e-10
    assert np.linalg.norm(even) == pytest.approx(1.0)
    assert np.allclose(even, even[::-1, ::-1])
    assert np.allclose(odd, -odd[::-1, ::-1])


def test_convolve_matches_numpy_reference():
    rng = np.random.default_rng(3)
    img, k = rng.uniform(-1, 1, (8, 8)), rng.uniform(-1, 1, (3, 3))
    padded = np.pad(img, 1, mode="edge")
    flipped = k[::-1, ::-1]
    want = np.array([[np.sum(padded[y:y + 3, x:x + 3] * flipped) for x in range(8)] for y in range(8)])
    assert np.allclose(skycast.convolve_2d(img, k), want, atol=1e-12)


def test_shape_chain():
    chain = skycast.shape_chain("C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)", 200, 200)
    assert [s[0] for s in chain[:5]] == [196, 98, 94, 47, 43]
    assert math.prod(chain[4]) == 18490


def test_render_and_metrics():
    sky = skycast.render_base_sky(64, 5)
    assert sky.shape == (64, 64, 3)
    assert skycast.ssim(sky, sky) == pytest.approx(1.0)
    assert np.array_equal(skycast.render_variant(sky, "Good"), sky)
    hazy = skycast.render_variant(sky, "Very Unhealthy", seed=1)
    assert skycast.ssim(sky, hazy) < 1.0
    png = skycast.encode_png(hazy)
    assert np.abs(skycast.decode_image(png) - hazy).max() <= 0.5 / 255 + 1e-12
    a = np.random.default_rng(1).normal(size=(30, 4))
    assert skycast.frechet_distance(a, a) == pytest.approx(0.0, abs=1e-9)
    b = a.copy()
    b[:, 2] += 0.5
    assert skycast.frechet_distance(a, b) == pytest.approx(0.25, abs=1e-9)


def test_features_and_mask():
    sky = skycast.render_base_sky(120, 9)
    assert skycast.sky_mask(sky).mean() > 0.5
    fv = skycast.extract_features((sky * 255).astype(np.uint8))
    assert fv.shape == (48,)
    assert np.all(np.isfinite(fv))


def test_split_and_evaluate():
    labels = ["Good"] * 20 + ["Moderate"] * 10
    tags = skycast.stratified_split(labels, 4)
    assert tags == skycast.stratified_split(labels, 4)
    good, moderate = tags[:20], tags[20:]
    assert (good.count("train"), good.count("val"), good.count("test")) == (14, 3, 3)
    # 1.5 / 1.5 remainders tie; the earlier split gets the extra record
    assert (moderate.count("train"), moderate.count("val"), moderate.count("test")) == (7, 2, 1)
    r = skycast.evaluate(["Good", "Moderate"], ["Good", "Good"])
    assert r["accuracy"] == 0.5


def test_train_predict_round_trip(tmp_path):
    manifest = skycast.generate_synthetic_dataset(tmp_path / "corpus", per_grade=6, size=64, seed=2)
    model = skycast.train(manifest, "rf", seed=2)
    assert model.kind == "rf"
    path = tmp_path / "rf.model"
    model.save(path)
    again = skycast.Model.load(path)
    assert again.model_id == model.model_id
    p = again.predict(skycast.render_base_sky(200, 77))
    assert p["grade"] in [g["name"] for g in skycast.grades()]
    assert sum(p["probabilities"]) == pytest.approx(1.0)
    assert p == model.predict(skycast.render_base_sky(200, 77))
