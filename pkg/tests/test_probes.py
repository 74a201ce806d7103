"""Probes: chance-level behavior of untrained models, exact rho = 0
equivalence, reproducibility, and the CSV export format."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from mgaug.model import init_params
from mgaug.probes import (HatProfile, memorization_probe, profile_to_csv,
                          reactivation_probe, reactivation_to_csv)
from mgaug.tasks import make_bank


def _bank():
    return make_bank(12, 6, 0.3, 0, split_fractions=(1.0, 0.0, 0.0))


def _probe(**overrides):
    kwargs = dict(n_tasks=20, n_way=3, k_shot=1, q_queries=5, steps=2,
                  alpha=0.1, seed=4)
    kwargs.update(overrides)
    return memorization_probe(init_params([6, 8, 3], 0), _bank(), "me",
                              [0.0, 0.3], "pp", **kwargs)


def test_untrained_step0_is_near_chance():
    # me labels are a fresh uniform permutation per episode, so any fixed
    # init scores 1/3 in expectation at step 0
    prof = _probe(n_tasks=60)
    assert abs(prof.baseline[0] - 1.0 / 3.0) < 3 * max(prof.baseline_stderr[0], 0.02)


def test_zero_rate_profile_equals_baseline_exactly():
    prof = _probe()
    assert np.array_equal(prof.profiles[0.0], prof.baseline)
    assert np.array_equal(prof.profile_stderrs[0.0], prof.baseline_stderr)


def test_probe_is_reproducible_and_read_only():
    omega = init_params([6, 8, 3], 1)
    before = omega.copy()
    bank = _bank()
    a = memorization_probe(omega, bank, "me", [0.2], "cp", n_tasks=10,
                           n_way=3, q_queries=5, steps=2, seed=7)
    b = memorization_probe(omega, bank, "me", [0.2], "cp", n_tasks=10,
                           n_way=3, q_queries=5, steps=2, seed=7)
    assert np.array_equal(a.baseline, b.baseline)
    assert np.array_equal(a.profiles[0.2], b.profiles[0.2])
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])
               for x, y in zip(omega.layers, before.layers))


def test_probe_curves_have_steps_plus_one_points():
    prof = _probe(steps=3)
    assert prof.baseline.shape == (4,)
    assert prof.profiles[0.3].shape == (4,)
    assert prof.n_tasks == 20


def test_probe_covers_all_three_strategies():
    omega = init_params([6, 8, 3], 2)
    bank = _bank()
    for strategy in ("wp", "pp", "cp"):
        prof = memorization_probe(omega, bank, "me", [0.4], strategy,
                                  n_tasks=5, n_way=3, q_queries=5, steps=1, seed=1)
        assert prof.strategy == strategy
        assert set(prof.profiles) == {0.4}


def test_probe_validation():
    omega = init_params([6, 8, 3], 0)
    with pytest.raises(ValueError):
        memorization_probe(omega, _bank(), "me", [0.2], "none", n_tasks=2, n_way=3)
    with pytest.raises(ValueError):
        memorization_probe(omega, _bank(), "me", [1.0], "pp", n_tasks=2, n_way=3)


def test_hat_profile_drop_and_gain_helpers():
    prof = HatProfile("pp", [0.5],
                      baseline=np.array([0.8, 0.85, 0.9]),
                      baseline_stderr=np.zeros(3),
                      profiles={0.5: np.array([0.3, 0.5, 0.7])},
                      profile_stderrs={0.5: np.zeros(3)},
                      n_tasks=10)
    assert prof.step0_drop(0.5) == pytest.approx(0.5)
    assert prof.gain(0.5) == pytest.approx(0.4)
    assert prof.gain() == pytest.approx(0.1)


def test_reactivation_runs_variants_on_identical_episodes():
    bank = _bank()
    omega = init_params([6, 8, 3], 3)
    report = reactivation_probe({"a": omega, "b": omega}, bank, steps=2,
                                n_tasks=8, mode="me", n_way=3, q_queries=5, seed=9)
    ra, rb = report.row("a"), report.row("b")
    # same parameters on the same episodes: identical curves
    assert np.array_equal(ra.curve, rb.curve)
    assert ra.gain == pytest.approx(ra.final - ra.step0)
    assert ra.step0_gap == pytest.approx(ra.step0 - 1.0 / 3.0)
    with pytest.raises(KeyError):
        report.row("missing")


def test_profile_csv_format(tmp_path):
    prof = _probe(steps=2)
    path = str(tmp_path / "probe.csv")
    profile_to_csv(prof, path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["variant", "rho", "step", "mean_acc", "stderr", "n_tasks"]
    body = rows[1:]
    # baseline curve + one curve per probed rate, steps + 1 points each
    assert len(body) == 3 * (2 + 1)
    assert [r[0] for r in body[:3]] == ["baseline"] * 3
    assert all(r[0] == "pp" for r in body[3:])
    assert [r[2] for r in body[:3]] == ["0", "1", "2"]
    for r in body:
        float(r[3]), float(r[4])
        assert r[5] == "20"
    base0 = [r for r in body if r[0] == "baseline" and r[2] == "0"][0]
    assert float(base0[3]) == pytest.approx(prof.baseline[0], rel=1e-8)


def test_reactivation_csv_format(tmp_path):
    bank = _bank()
    report = reactivation_probe({"init": init_params([6, 8, 3], 5)}, bank,
                                steps=2, n_tasks=4, mode="me", n_way=3,
                                q_queries=5, seed=2)
    path = str(tmp_path / "react.csv")
    reactivation_to_csv(report, path, 4)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["variant", "rho", "step", "mean_acc", "stderr", "n_tasks"]
    assert len(rows) == 1 + 3
    assert all(r[0] == "init" for r in rows[1:])
