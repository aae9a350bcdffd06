"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
printed with output capture disabled, so they also appear in a plain run.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from helpers import GRADIENT_CASES, deep_pipeline, gradient_errors, random_points, residual
from lorentzkit import fileio
from lorentzkit.config import RunConfig
from lorentzkit.data import gen_synthetic_hierarchy
from lorentzkit.gyro import gyro_add, gyro_inverse, gyro_scale
from lorentzkit.layers import coordinate_distances, lfc_head_forward, log_radius_scale, mlr_logits, plfc_forward
from lorentzkit.lorentz import geodesic_dist, origin
from lorentzkit.normstats import NormState, frechet_variance, gyrolbn_forward, lorentzian_centroid
from lorentzkit.training import bench_norm, evaluate, train
from oracle import ball_gyro_add, chord_objective, mc_log_radius, random_geodesic_perturbation

SEEDS = (0, 1, 2, 3, 4)
MIDPOINT = np.array([1.1276259652063808, 0.5210953054937474])
QUOTED_MIDPOINT = np.array([1.12766, 0.52111])


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


class TestCriterion1:
    def test_plfc_coordinates_equal_logits(self, report):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(10_000):
            n, m = rng.integers(1, 33, size=2)
            x = random_points(rng, 1, n)[0]
            z, a = rng.normal(size=(m, n)), rng.normal(size=m)
            worst = max(worst, np.abs(coordinate_distances(plfc_forward(x, z, a)) - mlr_logits(x, z, a)).max())
        elapsed = time.perf_counter() - start
        report(1, worst <= 1e-10 and elapsed < 10.0,
               f"max |coordinate distance - logit| = {worst:.2e} (<= 1e-10), {elapsed:.2f} s (< 10 s)")


class TestCriterion2:
    def test_margins(self, report):
        rng = np.random.default_rng(102)
        plfc_worst = 0.0
        for _ in range(10_000):
            n, m = rng.integers(2, 33, size=2)
            x = random_points(rng, 1, n)[0]
            z, a = rng.normal(size=(m, n)), rng.normal(size=m)
            v = mlr_logits(x, z, a)
            read = coordinate_distances(plfc_forward(x, z, a))
            plfc_worst = max(plfc_worst, np.abs((read[0] - read[1:]) - (v[0] - v[1:])).max())
        lfc_ok, checked = True, 0
        for _ in range(10_000):
            u = rng.normal(0.0, 3.0, size=int(rng.integers(2, 9)))
            _, logits = lfc_head_forward(u)
            delta = u[0] - u[1:]
            keep = np.abs(delta) > 1e-6
            d = (logits[0] - logits[1:])[keep]
            lfc_ok &= bool(np.all(np.abs(d) < np.abs(delta[keep])) and np.all(np.sign(d) == np.sign(delta[keep])))
            checked += int(keep.sum())
        instance = lfc_head_forward(np.array([2.0, 1.0]))[1]
        gap = instance[0] - instance[1]
        ok = plfc_worst <= 1e-12 and lfc_ok and abs(gap - 0.562262) <= 1e-6
        report(2, ok, f"PLFC margin error {plfc_worst:.2e} (<= 1e-12); LFC contraction with sign on {checked} "
                      f"pairs: {lfc_ok}; u=(2,1) gap {gap:.6f} (0.562262)")


class TestCriterion3:
    def test_gyrogroup_axioms(self, report):
        rng = np.random.default_rng(103)
        x, y = random_points(rng, 1000, 3), random_points(rng, 1000, 3)
        o = np.broadcast_to(origin(-1.0, 3), x.shape)
        errors = {
            "left identity": np.abs(gyro_add(o, x) - x).max(),
            "right identity": np.abs(gyro_add(x, o) - x).max(),
            "left inverse": np.abs(gyro_add(gyro_inverse(x), x) - o).max(),
            "ball conjugation": np.abs(gyro_add(x, y) - ball_gyro_add(x, y)).max(),
        }
        s, t = rng.uniform(-1.5, 1.5, size=(2, 1000, 1))
        errors["scalar distributivity"] = np.abs(gyro_scale(s + t, x) - gyro_add(gyro_scale(s, x),
                                                                                 gyro_scale(t, x))).max()
        worst = max(errors.values())
        report(3, worst <= 1e-8, ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + " (all <= 1e-8)")


class TestCriterion4:
    def test_manifold_preservation(self, report):
        rng = np.random.default_rng(104)
        worst, points, runs = 0.0, 0, 0
        while points < 10_000:
            x = random_points(rng, 16, 6)
            for _, out in deep_pipeline(rng, x):
                worst = max(worst, float(residual(out).max()))
            points += len(x)
            runs += 1
        report(4, worst <= 1e-7, f"max |K<x,x>_L - 1| = {worst:.2e} (<= 1e-7) over {points} points, "
                                 f"{runs} random pipelines, every layer and optimizer step")


class TestCriterion5:
    def test_gradients(self, report):
        rng = np.random.default_rng(105)
        worst = {}
        for name, case in GRADIENT_CASES.items():
            for _ in range(100):
                for param, err in gradient_errors(case, rng).items():
                    key = f"{name}.{param}"
                    worst[key] = max(worst.get(key, 0.0), err)
        key = max(worst, key=worst.get)
        report(5, worst[key] <= 1e-4, f"{len(worst)} parameter groups x 100 draws; worst {key} {worst[key]:.2e} "
                                      f"(<= 1e-4)")


class TestCriterion6:
    def test_centroid_optimality(self, report):
        rng = np.random.default_rng(106)
        beaten = 0
        for _ in range(100):
            pts = random_points(rng, int(rng.integers(2, 20)), 3)
            w = rng.uniform(0.1, 1.0, size=len(pts))
            mu = lorentzian_centroid(pts, w)
            best = chord_objective(mu, pts, w)
            beaten += all(chord_objective(random_geodesic_perturbation(mu, 1e-3, rng), pts, w) > best
                          for _ in range(100))
        pair = np.array([[np.cosh(1.0), np.sinh(1.0)], [1.0, 0.0]])
        got = lorentzian_centroid(pair)
        hand_err = np.abs(got - MIDPOINT).max()
        quoted = np.abs(got - QUOTED_MIDPOINT).max()
        report(6, beaten == 100 and hand_err <= 1e-5,
               f"centroid beat all perturbations on {beaten}/100 batches; two-point value "
               f"({got[0]:.6f}, {got[1]:.6f}) error {hand_err:.1e} vs (cosh 1/2, sinh 1/2); "
               f"distance to the quoted (1.12766, 0.52111) is {quoted:.1e}")


class TestCriterion7:
    def test_log_radius_invariance(self, report):
        rng = np.random.default_rng(107)
        stats = {n: mc_log_radius(2, n, 10_000, rng) for n in (1, 2, 4, 8)}
        worst = 0.0
        for a in stats:
            for b in stats:
                gap = abs(stats[a].post_mean - stats[b].post_mean)
                worst = max(worst, gap / np.hypot(stats[a].post_stderr, stats[b].post_stderr))
        scale_err = abs(log_radius_scale(4, 2) - np.exp(0.5))
        means = ", ".join(f"N={n}: {s.post_mean:.4f}" for n, s in stats.items())
        report(7, worst <= 3.0 and scale_err <= 1e-12,
               f"{means}; max gap {worst:.2f} standard errors (<= 3); |s(4,2) - e^0.5| = {scale_err:.1e}")


class TestCriterion8:
    def test_gyrolbn_centering(self, report):
        rng = np.random.default_rng(108)
        worst = 0.0
        for _ in range(20):
            x = gyro_add(random_points(rng, 1, 4)[0], random_points(rng, 256, 4))
            state = NormState(4, track_running=False)
            # gamma chosen so the effective scale gamma / sqrt(var + eps) is one
            state.gamma.data = np.array(np.sqrt(frechet_variance(x, lorentzian_centroid(x)) + state.eps))
            out = np.asarray(gyrolbn_forward(x, state, "train").data)
            worst = max(worst, float(geodesic_dist(lorentzian_centroid(out), origin(-1.0, 4))))
        report(8, worst <= 1e-7, f"max geodesic distance of output centroid from origin {worst:.2e} (<= 1e-7) "
                                 f"over 20 batches of 256")


def acceptance_config(**kw):
    return RunConfig(**{"seed": 0, "figures": False, **kw}).validate()


@pytest.fixture(scope="module")
def head_runs(tmp_path_factory):
    """Train plfc and lfc heads with gyrolbn on the default synthetic task, once per seed."""
    runs = {}
    for head in ("plfc", "lfc"):
        for seed in SEEDS:
            data = gen_synthetic_hierarchy(depth=2, branching=3, dim=16, noise=0.1, seed=seed)
            out = tmp_path_factory.mktemp(f"{head}{seed}")
            start = time.perf_counter()
            result = train(acceptance_config(seed=seed, head=head), out, *data)
            runs[head, seed] = (result, time.perf_counter() - start, data)
    return runs


class TestCriterion9:
    def test_ablation_directions(self, report, head_runs):
        start = time.perf_counter()
        mean = {head: np.mean([head_runs[head, s][0].final[3] for s in SEEDS]) for head in ("plfc", "lfc")}
        records = {r["variant"]: r for r in bench_norm(acceptance_config(bench_batch=256, bench_dim=64))}
        train_time = sum(t for _, t, _ in head_runs.values())
        elapsed = train_time + time.perf_counter() - start
        fast, slow = records["gyrolbn"]["median_s"], records["gyrobn-iter10"]["median_s"]
        ok = mean["plfc"] >= mean["lfc"] and fast < slow and elapsed < 300.0
        report(9, ok, f"mean test accuracy plfc {mean['plfc']:.4f} vs lfc {mean['lfc']:.4f} over seeds {SEEDS}; "
                      f"median gyrolbn {fast * 1e3:.2f} ms vs gyrobn-iter10 {slow * 1e3:.2f} ms; "
                      f"{elapsed:.1f} s (< 300 s)")


class TestCriterion10:
    def test_end_to_end_training(self, report, head_runs, tmp_path):
        lines = []
        ok = True
        for seed in SEEDS:
            result, seconds, data = head_runs["plfc", seed]
            acc = evaluate(result.checkpoint, data[1])["accuracy"]
            rerun = train(acceptance_config(seed=seed), tmp_path / str(seed), *data)
            same = all((tmp_path / str(seed) / f).read_bytes() == (Path(result.checkpoint).parent / f).read_bytes()
                       for f in ("metrics.csv", "checkpoint.ilnnc"))
            ok &= acc >= 0.95 and seconds < 120.0 and same and result.history[-1][0] == 50
            lines.append(f"seed {seed}: {acc:.4f} in {seconds:.1f} s, bit-exact rerun {same}")
        report(10, ok, "; ".join(lines) + " (>= 0.95 within 50 epochs, < 120 s)")


def test_checkpoint_config_recorded(head_runs):
    result = head_runs["plfc", SEEDS[0]][0]
    _, texts = fileio.read_checkpoint(result.checkpoint)
    assert "seed=0" in texts["config"]
