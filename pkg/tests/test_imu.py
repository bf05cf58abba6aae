"""IMU autoencoder training, normalization, and scoring."""

import numpy as np
import pytest

from dronewatch import datagen, imu, nn


def identity_data_net():
    net = nn.Network([nn.dense(10, 10)], seed=0)
    net.layers[0].w[...] = np.eye(10, dtype=np.float32)
    net.layers[0].b[...] = 0
    return net


def zero_mag_net():
    net = nn.Network([nn.dense(3, 3)], seed=0)
    net.layers[0].w[...] = 0
    net.layers[0].b[...] = 0
    return net


def passthrough_stats(dim):
    return imu.NormalizationStats(lo=np.zeros(dim), hi=np.ones(dim))


def hand_model(l_max_data=2.0, l_max_mag=0.5):
    return imu.ImuAnomalyModel(
        data_net=identity_data_net(), mag_net=zero_mag_net(),
        data_stats=passthrough_stats(10), mag_stats=passthrough_stats(3),
        l_max_data=l_max_data, l_max_mag=l_max_mag)


def make_data_sample(ts=0.0, values=None):
    v = np.zeros(10) if values is None else np.asarray(values, dtype=float)
    q = v[:4] if np.linalg.norm(v[:4]) > 0 else np.array([1.0, 0, 0, 0])
    q = q / np.linalg.norm(q)
    return imu.ImuDataSample(timestamp=ts, orientation=tuple(q),
                             angular_velocity=tuple(v[4:7]),
                             linear_acceleration=tuple(v[7:10]))


# ---------------------------------------------------------------------------
# normalization

def test_normalize_min_max_midpoint():
    x = np.array([[0.0, 10.0], [4.0, 20.0], [2.0, 15.0]])
    stats = imu.NormalizationStats.fit(x)
    np.testing.assert_allclose(stats.apply(np.array([0.0, 10.0])), [0.0, 0.0])
    np.testing.assert_allclose(stats.apply(np.array([4.0, 20.0])), [1.0, 1.0])
    np.testing.assert_allclose(stats.apply(np.array([2.0, 15.0])), [0.5, 0.5])


def test_normalize_constant_feature_maps_to_zero():
    x = np.array([[1.0, 5.0], [2.0, 5.0]])
    stats = imu.NormalizationStats.fit(x)
    assert stats.constant_mask.tolist() == [False, True]
    np.testing.assert_allclose(stats.apply(np.array([1.5, 5.0])), [0.5, 0.0])


def test_normalize_feature_count_mismatch():
    stats = imu.NormalizationStats.fit(np.zeros((3, 4)) + np.arange(4))
    with pytest.raises(ValueError, match="feature count"):
        stats.apply(np.zeros(5))


def test_normalize_monotone_and_invertible():
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, size=(50, 6))
    stats = imu.NormalizationStats.fit(x)
    a = rng.uniform(-5, 5, size=6)
    b = a + rng.uniform(0, 2, size=6)
    na, nb = stats.apply(a), stats.apply(b)
    assert (nb >= na).all()
    span = stats.hi - stats.lo
    recovered = na.astype(np.float64) * span + stats.lo
    np.testing.assert_allclose(recovered, a, atol=1e-5)


def test_out_of_range_values_not_clipped():
    stats = imu.NormalizationStats.fit(np.array([[0.0], [1.0]]))
    assert stats.apply(np.array([3.0]))[0] == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# scoring against hand-built models

def test_score_zero_error_is_zero():
    model = hand_model()
    sample = make_data_sample(values=np.linspace(0.1, 0.9, 10))
    assert imu.score_data(sample, model) == 0.0


def test_score_ratio_definition():
    # zero net reconstructs everything as 0: error = mean(x^2)
    model = hand_model(l_max_mag=0.5)
    sample = imu.ImuMagSample(timestamp=0.0, field=(1.0, 1.0, 1.0))
    # normalized passthrough: error = 1.0, sigma = 1.0 / 0.5 = 2.0
    assert imu.score_mag(sample, model) == pytest.approx(2.0)
    model_eq = hand_model(l_max_mag=1.0)
    assert imu.score_mag(sample, model_eq) == pytest.approx(1.0)


def test_score_scale_equivariant_in_error():
    model = hand_model(l_max_mag=1.0)
    s1 = imu.ImuMagSample(0.0, (0.5, 0.5, 0.5))   # error 0.25
    s2 = imu.ImuMagSample(0.0, (1.0, 1.0, 1.0))   # error 1.0 (4x)
    r1 = imu.score_mag(s1, model)
    r2 = imu.score_mag(s2, model)
    assert r2 == pytest.approx(4.0 * r1)


def test_untrained_model_rejected():
    model = hand_model(l_max_data=0.0)
    with pytest.raises(ValueError, match="not trained"):
        imu.score_data(make_data_sample(), model)


def test_quaternion_normalization_contract():
    with pytest.raises(ValueError, match="norm"):
        imu.normalize_quaternion((1.1, 0.0, 0.0, 0.0))
    q = imu.normalize_quaternion((1.0005, 0.0, 0.0, 0.0))
    assert q[0] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# joint training

def paired_streams(duration=60, seed=0):
    spec = datagen.SyntheticRunSpec(seed=seed, duration=duration)
    data, mag, _ = datagen.make_imu_stream(spec)
    return data, mag


def test_train_joint_validation():
    data, mag = paired_streams(10)
    with pytest.raises(ValueError, match="nonempty"):
        imu.train_joint([], mag)
    with pytest.raises(ValueError, match="not paired"):
        imu.train_joint(data, mag[:-1])
    shifted = [imu.ImuMagSample(m.timestamp + 5.0, m.field) for m in mag]
    with pytest.raises(ValueError, match="unpairable"):
        imu.train_joint(data, shifted)


def test_constant_training_set_memorized():
    base_d = make_data_sample(values=np.linspace(0.1, 1.0, 10))
    base_m = imu.ImuMagSample(0.0, (100.0, -50.0, 25.0))
    data = [imu.ImuDataSample(float(i), base_d.orientation, base_d.angular_velocity,
                              base_d.linear_acceleration) for i in range(20)]
    mag = [imu.ImuMagSample(float(i), base_m.field) for i in range(20)]
    model = imu.train_joint(data, mag, imu.ImuTrainConfig(seed=0, epochs=60))
    assert model.meta["final_loss"] < 1e-3
    assert model.l_max_data > 0 and model.l_max_mag > 0


def test_train_joint_deterministic():
    data, mag = paired_streams(50, seed=2)
    cfg = imu.ImuTrainConfig(seed=1, epochs=5)
    m1 = imu.train_joint(data, mag, cfg)
    m2 = imu.train_joint(data, mag, cfg)
    assert m1.l_max_data == m2.l_max_data
    assert m1.l_max_mag == m2.l_max_mag
    for (_, a), (_, b) in zip(m1.data_net.parameters(), m2.data_net.parameters()):
        np.testing.assert_array_equal(a, b)


def test_training_samples_score_at_most_one():
    data, mag = paired_streams(80, seed=3)
    model = imu.train_joint(data, mag, imu.ImuTrainConfig(seed=0, epochs=10))
    assert imu.score_data_batch(data, model).max() <= 1.0
    assert imu.score_mag_batch(mag, model).max() <= 1.0
    # the maximum is attained exactly by construction of L_max
    assert imu.score_data_batch(data, model).max() == 1.0


def test_final_loss_below_initial():
    data, mag = paired_streams(60, seed=4)
    model = imu.train_joint(data, mag, imu.ImuTrainConfig(seed=0, epochs=8))
    assert model.meta["final_loss"] < model.meta["initial_loss"]


def test_save_load_roundtrip(tmp_path):
    data, mag = paired_streams(40, seed=5)
    model = imu.train_joint(data, mag, imu.ImuTrainConfig(seed=0, epochs=4))
    path = tmp_path / "imu.ckpt"
    imu.save_model(path, model)
    loaded = imu.load_model(path)
    assert loaded.l_max_data == model.l_max_data
    assert loaded.l_max_mag == model.l_max_mag
    np.testing.assert_array_equal(loaded.data_stats.lo, model.data_stats.lo)
    sd_orig = imu.score_data_batch(data, model)
    sd_loaded = imu.score_data_batch(data, loaded)
    np.testing.assert_array_equal(sd_orig, sd_loaded)
