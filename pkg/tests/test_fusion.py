"""Fusion arithmetic and the N >= 1 decision rule."""

import numpy as np
import pytest

from dronewatch.fusion import (ABNORMAL, NORMAL, AnomalyScore, FusionWeights,
                               fuse, fuse_stream)

DEFAULT = FusionWeights()


def test_zero_degrees_is_normal():
    score = fuse(0.0, 0.0, 0.0)
    assert score.n == 0.0
    assert score.label == NORMAL


def test_boundary_n_equal_one_is_abnormal():
    score = fuse(1.0, 0.0, 0.0)
    assert score.n == 1.0
    assert score.label == ABNORMAL


def test_halves_with_default_weights():
    score = fuse(0.5, 0.5, 0.5)
    assert score.n == pytest.approx(1.325, abs=1e-9)
    assert score.label == ABNORMAL


def test_exact_weighted_sum():
    rng = np.random.default_rng(0)
    for _ in range(50):
        sd, sm, sl = rng.uniform(0, 3, size=3)
        score = fuse(sd, sm, sl)
        assert score.n == pytest.approx(1.0 * sd + 0.9 * sm + 0.75 * sl, abs=1e-12)


def test_negative_degree_rejected():
    with pytest.raises(ValueError, match="sigma_m"):
        fuse(0.0, -0.1, 0.0)


def test_weights_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        FusionWeights(w_d=-1.0)
    with pytest.raises(ValueError, match="at least one"):
        FusionWeights(w_d=0.0, w_m=0.0, w_l=0.0)


def test_monotone_in_each_degree():
    rng = np.random.default_rng(1)
    for _ in range(30):
        sd, sm, sl = rng.uniform(0, 2, size=3)
        base = fuse(sd, sm, sl)
        for bump in (fuse(sd + 0.5, sm, sl), fuse(sd, sm + 0.5, sl), fuse(sd, sm, sl + 0.5)):
            assert bump.n >= base.n
            if base.label == ABNORMAL:
                assert bump.label == ABNORMAL


def test_weights_one_zero_zero_reduces_to_sigma_d_threshold():
    w = FusionWeights(w_d=1.0, w_m=0.0, w_l=0.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        sd, sm, sl = rng.uniform(0, 2, size=3)
        score = fuse(sd, sm, sl, weights=w)
        assert score.n == sd
        assert (score.label == ABNORMAL) == (sd >= 1.0)


def test_classification_invariant_under_joint_scaling():
    rng = np.random.default_rng(3)
    for _ in range(50):
        sd, sm, sl = rng.uniform(0, 2, size=3)
        c = rng.uniform(0.1, 10.0)
        plain = fuse(sd, sm, sl)
        scaled = fuse(sd, sm, sl,
                      weights=FusionWeights(w_d=1.0 * c, w_m=0.9 * c, w_l=0.75 * c),
                      threshold=1.0 * c)
        assert plain.label == scaled.label


def test_fuse_is_linear_in_degrees():
    a = np.array([0.2, 0.4, 0.1])
    b = np.array([0.3, 0.1, 0.6])
    na = fuse(*a).n
    nb = fuse(*b).n
    nab = fuse(*(a + b)).n
    assert nab == pytest.approx(na + nb, abs=1e-12)


def test_fuse_stream_empty():
    scores, unscorable = fuse_stream([])
    assert scores == [] and unscorable == []


def test_fuse_stream_single_triple_normal():
    scores, unscorable = fuse_stream([(0.0, 0.2, 0.1, 0.9)])
    assert not unscorable
    assert scores[0].n == pytest.approx(0.965, abs=1e-9)
    assert scores[0].label == NORMAL


def test_fuse_stream_reports_missing_modality():
    triples = [(0.0, 0.2, 0.1, 0.1), (0.1, 0.2, None, 0.1), (0.2, 2.0, 0.0, 0.0)]
    scores, unscorable = fuse_stream(triples)
    assert len(scores) == 2
    assert len(unscorable) == 1
    assert unscorable[0].timestamp == 0.1
    assert unscorable[0].missing == ("sigma_m",)
    assert scores[1].label == ABNORMAL


def test_fuse_stream_requires_time_order():
    with pytest.raises(ValueError, match="ordered"):
        fuse_stream([(1.0, 0, 0, 0), (0.5, 0, 0, 0)])


def test_anomaly_score_fields():
    score = fuse(0.1, 0.2, 0.3, timestamp=4.2)
    assert isinstance(score, AnomalyScore)
    assert score.timestamp == 4.2
    assert (score.sigma_d, score.sigma_m, score.sigma_l) == (0.1, 0.2, 0.3)
