"""Smoke tests for the python module."""

import math

import pytest

import edgescale as es


def test_slo_fulfillment():
    assert es.slo_fulfillment(40.0, 30.0) == 1.0
    assert es.slo_fulfillment(15.0, 30.0) == 0.5
    assert es.slo_fulfillment(0.0, 5.0) == 0.0
    with pytest.raises(Exception):
        es.slo_fulfillment(-1.0, 5.0)


def test_service_and_global_fulfillment():
    cv = es.ServiceConfig(quality=288, model_size=3, cores=3.8)
    assert es.service_fulfillment("CV", cv, 5.0) == 1.0
    qr = es.ServiceConfig(quality=450, cores=2.0)
    assert es.service_fulfillment("QR", qr, 30.0) == 0.5
    assert es.global_fulfillment([2.0 / 3.0, 0.5]) == pytest.approx(7.0 / 12.0)
    assert es.free_cores(8.0, [3.8, 4.0]) == pytest.approx(0.2)


def test_ground_truth_surface():
    cv = es.ServiceConfig(quality=288, model_size=3, cores=3.8)
    assert es.ground_truth_throughput("CV", cv) == pytest.approx(5.00, abs=0.01)
    qr = es.ServiceConfig(quality=900, cores=4.0)
    assert es.ground_truth_throughput("QR", qr) == pytest.approx(60.0)


def test_oracle_defaults():
    best = es.oracle()
    assert best["phi_star"] == pytest.approx(1.0)
    assert best["cv_quality"] == 288
    assert best["cv_model"] == 3
    assert best["qr_quality"] == 900
    assert best["cv_cores"] == pytest.approx(3.80, abs=0.05)
    assert best["qr_cores"] == pytest.approx(4.00, abs=0.05)


def test_short_ask_run():
    records = es.run_experiment("ask", iterations=10, repetitions=2, seed=7)
    assert len(records) == 20
    steps = {(r["run_id"], r["step"]) for r in records}
    assert len(steps) == 20
    for r in records:
        assert 0.0 <= r["phi_mean"] <= 1.0
        assert r["cv_cores"] + r["qr_cores"] <= 8.0 + 1e-9
        assert math.isfinite(r["cycle_ms"])
