"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete.  The heavy criteria (06, 07) dominate the runtime.
"""

import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np

import postens as pt
from postens.cli import main
from oracles import (
    central_difference_gradient,
    conditional_mean_gap,
    random_product_tensor,
    scan_minimize_rank1,
)


def report(num, name, ok, detail=""):
    print(f"\n[acceptance {num:02d}] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def test_01_exact_construction():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_rel = 0.0
    bounds_ok = True
    for _ in range(50):
        dims, facets, dense_arr = random_product_tensor(rng, p_max=5, r_max=4)
        tensor = pt.DenseTensor.from_array(dense_arr)
        M = tensor.positivity_bound() * 1.000001
        fs = pt.construct_exact_decomposition(tensor, pt.PartitionComplex.from_lists(facets), M)
        rel = np.max(np.abs(fs.dense().entries - tensor.entries) / tensor.entries)
        worst_rel = max(worst_rel, rel)
        for f in fs.factors:
            if f.min() < M**-2 - 1e-12 or f.max() > M**2 + 1e-9:
                bounds_ok = False
    elapsed = time.perf_counter() - start
    ok = worst_rel < 1e-12 and bounds_ok and elapsed < 10.0
    report(1, "exact construction on 50 random products", ok,
           f"(max rel err {worst_rel:.2e}, bounds ok {bounds_ok}, {elapsed:.1f}s)")


def test_02_solver_oracle_equivalence():
    start = time.perf_counter()
    worst_obj_gap = 0.0
    for seed in range(20):
        for dims in ((2, 2), (2, 2, 2)):
            rng = np.random.default_rng(5000 + seed)
            arr = rng.uniform(0.6, 1.8, size=dims)
            obs = pt.exhaustive_observations(pt.DenseTensor.from_array(arr))
            M = max(2.0, 1.5 * float(obs.values.max()))
            cx = pt.PartitionComplex.singletons(len(dims))
            rep = pt.solve_convex(obs, cx, pt.SolveOptions(M=M))
            _, oracle_value = scan_minimize_rank1(obs.indices, obs.values, dims, M)
            worst_obj_gap = max(worst_obj_gap, abs(rep.objective - oracle_value))

    rng = np.random.default_rng(77)
    cx = pt.PartitionComplex.from_lists([[1, 2], [3]])
    shape = pt.TensorShape((2, 2, 3))
    worst_grad = 0.0
    points = 0
    while points < 100:
        logs = [rng.uniform(-0.4, 0.4, (2, 2)), rng.uniform(-0.4, 0.4, 3)]
        lp = pt.LogFactorSet(cx, shape, logs, 10.0,
                             np.array([a.min() for a in logs]),
                             np.array([a.max() for a in logs]))
        idx = np.column_stack([rng.integers(1, r + 1, 25) for r in shape.dims])
        obs = pt.ObservationSet(shape, idx, rng.uniform(0.5, 2.0, 25))
        analytic = pt.risk_gradient(lp, obs)
        numeric = central_difference_gradient(lambda: pt.empirical_risk(lp, obs), lp.logs)
        scale = max(max(np.abs(g).max() for g in numeric), 1.0)
        err = max(np.abs(a - b).max() for a, b in zip(analytic, numeric)) / scale
        worst_grad = max(worst_grad, err)
        points += 1
    elapsed = time.perf_counter() - start
    ok = worst_obj_gap < 1e-3 and worst_grad < 1e-6 and elapsed < 60.0
    report(2, "solver matches brute-force oracle", ok,
           f"(max objective gap {worst_obj_gap:.2e}, max grad err {worst_grad:.2e}, {elapsed:.1f}s)")


def test_03_rank1_recovery():
    rng = np.random.default_rng(31)
    worst = 0.0
    for dims in ((2, 2), (3, 4), (2, 3, 4), (4, 4, 4), (2, 2, 2, 2), (3, 2, 4, 2)):
        vecs = [rng.uniform(0.6, 1.6, r) for r in dims]
        cx = pt.PartitionComplex.singletons(len(dims))
        truth = pt.FactorSet(cx, pt.TensorShape(dims), vecs, 10.0).dense()
        obs = pt.exhaustive_observations(truth)
        rep = pt.solve_convex(obs, cx, pt.SolveOptions())
        worst = max(worst, pt.prediction_error(truth, pt.exp_reparam(rep.logparams)))
    ok = worst < 1e-6
    report(3, "noiseless rank-1 tensors recovered exactly", ok, f"(max prediction error {worst:.2e})")


def test_04_majorization_constants():
    rng = np.random.default_rng(4)
    mu, M = 1.5, 3.0
    a_l, b_l, a_u, b_u = pt.loss_equivalence_constants(mu, M)
    violations = 0
    for _ in range(20):
        dims = tuple(int(rng.integers(2, 4)) for _ in range(int(rng.integers(2, 4))))
        cx = pt.PartitionComplex.singletons(len(dims))
        shape = pt.TensorShape(dims)
        logs = [rng.uniform(-0.3, 0.3, r) for r in dims]
        lp = pt.LogFactorSet(cx, shape, logs, M,
                             np.array([a.min() for a in logs]),
                             np.array([a.max() for a in logs]))
        fs = pt.exp_reparam(lp)
        idx = np.column_stack([rng.integers(1, r + 1, 40) for r in dims])
        obs = pt.ObservationSet(shape, idx, rng.uniform(0.5, 3.0, 40))
        risk = pt.empirical_risk_theta(fs, obs)
        loss = pt.squared_loss(fs, obs)
        if not (a_l * loss + b_l <= risk + 1e-12 and risk <= a_u * loss + b_u + 1e-12):
            violations += 1
    report(4, "risk sandwiched by squared loss with proof constants",
           violations == 0, f"({violations} violations)")


def test_05_risk_gap_structure():
    opts = pt.SolveOptions()
    eps = opts.epsilon
    bench = pt.benchmark_tensor()
    obs = pt.exhaustive_observations(bench)

    cross_pairs = [(j, q) for j in range(1, 6) for q in range(j + 1, 6) if not (j, q) == (1, 2)]
    cross_gaps = {}
    for j, q in cross_pairs:
        cross_gaps[(j, q)] = pt.risk_gap(obs, j, q, opts).gap
    a_ok = all(abs(g) < 3 * eps for g in cross_gaps.values())

    rng = np.random.default_rng(55)
    cx2 = pt.PartitionComplex.from_lists([[1, 2], [3]])
    shape2 = pt.TensorShape((3, 3, 2))
    blocks = [rng.uniform(0.6, 1.6, (3, 3)), rng.uniform(0.6, 1.6, 2)]
    prod_obs = pt.exhaustive_observations(pt.FactorSet(cx2, shape2, blocks, 10.0))
    for j, q in ((1, 3), (2, 3)):
        gap = pt.risk_gap(prod_obs, j, q, opts).gap
        cross_gaps[("extra", j, q)] = gap
        a_ok = a_ok and abs(gap) < 3 * eps

    gap12 = pt.risk_gap(obs, 1, 2, opts).gap
    oracle_gap, _, _ = conditional_mean_gap(bench.dense().to_array(), 0, 1)
    worst_cross = max(abs(g) for g in cross_gaps.values())
    b_ok = gap12 > 0.01 and gap12 >= 10.0 * worst_cross and abs(gap12 - oracle_gap) < 1e-4

    zg_obs = pt.exhaustive_observations(pt.zero_gap_tensor())
    zero_gap = pt.risk_gap(zg_obs, 1, 2, opts).gap
    c_ok = abs(zero_gap) < 3 * eps

    report(5, "risk gaps separate coupled from decoupled structure",
           a_ok and b_ok and c_ok,
           f"(worst cross gap {worst_cross:.2e}, within-facet gap {gap12:.4f}, "
           f"fixture gap {zero_gap:.2e})")


def test_06_partition_recovery_under_noise():
    bench = pt.benchmark_tensor()
    target = ((1, 2), (3,), (4,), (5,))
    hits = 0
    for trial in range(20):
        obs = pt.sample_observations(pt.ExperimentSpec(
            bench, n=5000, noise=pt.NoiseModel.gamma(1.0), seed=pt.trial_seed(0, trial)))
        part = pt.estimate_partition(obs, pt.ThresholdPolicy.with_value(0.01))
        if part.facets == target:
            hits += 1
    report(6, "partition recovered in noisy trials", hits >= 18, f"({hits}/20 trials)")


def test_07_benchmark_error_trend():
    start = time.perf_counter()
    cfg = pt.BenchmarkConfig(
        truth=pt.benchmark_tensor(),
        n_grid=(100, 1000, 5000),
        noise=pt.NoiseModel.gamma(1.0),
        trials=20,
        seed=0,
        methods=("partition-log-linear", "als"),
    )
    result = pt.run_benchmark(cfg)
    pll = result.medians["partition-log-linear"]
    als = result.medians["als"]
    elapsed = time.perf_counter() - start
    decreasing = pll[100] > pll[1000] > pll[5000]
    small_tail = pll[5000] <= 0.15
    beats_als = all(pll[n] < als[n] for n in (1000, 5000))
    ok = decreasing and small_tail and beats_als and elapsed < 1800.0
    report(7, "benchmark medians shrink with n and beat ALS", ok,
           f"(pll {dict(pll)}, als {dict(als)}, {elapsed:.0f}s)")


def test_08_sparse_variant():
    truth = pt.DenseTensor.from_array([[1.0, 3.0], [2.0, 6.0]])
    obs = pt.exhaustive_observations(truth)
    cx = pt.PartitionComplex.singletons(2)
    opts = pt.SolveOptions(M=10.0)

    zero = pt.solve_sparse(obs, cx, pt.SolveOptions(M=10.0, l1_budget=0.0))
    theta_one = all(np.array_equal(np.exp(a), np.ones_like(a)) for a in zero.logparams.logs)

    unconstrained = pt.solve_convex(obs, cx, opts)
    norm = sum(np.abs(a).sum() for a in unconstrained.logparams.logs)
    loose = pt.solve_sparse(obs, cx, pt.SolveOptions(M=10.0, l1_budget=norm + 1.0))
    loose_ok = abs(loose.objective - unconstrained.objective) <= 2 * opts.epsilon

    cfg = pt.BenchmarkConfig(
        truth=pt.benchmark_tensor(),
        n_grid=(10,),
        noise=pt.NoiseModel.gamma(0.2),
        trials=20,
        seed=0,
        methods=("partition-log-linear", "sparse-partition-log-linear"),
    )
    result = pt.run_benchmark(cfg)
    sparse_med = result.medians["sparse-partition-log-linear"][10]
    plain_med = result.medians["partition-log-linear"][10]
    ok = theta_one and loose_ok and sparse_med < plain_med
    report(8, "sparse variant pins, relaxes, and wins at tiny n", ok,
           f"(theta==1 {theta_one}, loose gap {abs(loose.objective - unconstrained.objective):.2e}, "
           f"sparse {sparse_med:.2f} vs plain {plain_med:.2f})")


def test_09_randomized_decomposition():
    rng = np.random.default_rng(7)
    vecs = [rng.uniform(0.7, 1.4, 10) for _ in range(3)]
    shape = pt.TensorShape((10, 10, 10))
    cx = pt.PartitionComplex.singletons(3)
    truth = pt.FactorSet(cx, shape, vecs, 10.0).dense()
    delta = 0.05
    n = math.ceil(pt.effective_dimension(cx, shape) / delta)
    budget_ok = n <= 0.6 * shape.total_entries
    fit = pt.randomized_decompose(truth.value_at, shape, cx, delta, pt.SolveOptions(seed=11))
    err = pt.prediction_error(truth, fit)
    report(9, "randomized decomposition from a 60% budget", budget_ok and err < 1e-3,
           f"(n={n} of {shape.total_entries}, prediction error {err:.2e})")


def test_10_als_baseline():
    truth = pt.DenseTensor.from_array([[1.0, 3.0], [2.0, 6.0]])
    res = pt.als_fit(pt.exhaustive_observations(truth), rank=1, sweeps=50, seed=0)
    exact = pt.prediction_error(truth, res.model.dense())

    bench = pt.benchmark_tensor()
    noisy = pt.sample_observations(pt.ExperimentSpec(
        bench, n=600, noise=pt.NoiseModel.gamma(1.0), seed=8))
    worst_increase = -np.inf
    for rank in (1, 2, 3):
        losses = pt.als_fit(noisy, rank=rank, sweeps=40, seed=3).losses
        worst_increase = max(worst_increase, float(np.diff(losses).max()))
    ok = exact < 1e-8 and worst_increase <= 1e-10
    report(10, "ALS baseline is monotone and exact on rank-1 data", ok,
           f"(rank-1 error {exact:.2e}, worst sweep increase {worst_increase:.2e})")


def _run_all_commands(base: Path, tag: str) -> list[Path]:
    out = base / tag
    out.mkdir()
    bench = pt.benchmark_tensor()
    truth_file = base / "truth.json"
    if not truth_file.exists():
        truth_file.write_text(json.dumps({
            "dims": [3, 3, 3, 3, 3],
            "facets": [[1, 2], [3], [4], [5]],
            "factors": [f.tolist() for f in bench.factors],
            "M": 9.0,
        }))
        facets_file = base / "facets.json"
        facets_file.write_text(json.dumps([[1, 2], [3], [4], [5]]))
        queries = base / "queries.csv"
        queries.write_text("x1,x2,x3,x4,x5\n1,1,3,1,1\n2,2,2,2,2\n")
    obs_csv = out / "obs.csv"
    assert main(["synth", "--n", "80", "--noise", "1,1", "--seed", "3",
                 "--out", str(obs_csv)]) == 0
    assert main(["complete", "--data", str(obs_csv), "--dims", "3,3,3,3,3",
                 "--threshold", "0.01", "--seed", "0", "--truth", str(truth_file),
                 "--out", str(out / "fit")]) == 0
    assert main(["approximate", "--data", str(obs_csv), "--dims", "3,3,3,3,3",
                 "--lambda", "2.0", "--seed", "0", "--out", str(out / "sparse")]) == 0
    assert main(["decompose", "--data", str(truth_file), "--facets", str(base / "facets.json"),
                 "--M", "9.0", "--out", str(out / "exact")]) == 0
    assert main(["predict", "--model", str(out / "fit.model.json"),
                 "--data", str(base / "queries.csv"), "--out", str(out / "preds.csv")]) == 0
    assert main(["benchmark", "--n-grid", "30,60", "--trials", "2", "--noise", "none",
                 "--seed", "1", "--out", str(out / "bench")]) == 0
    files = sorted(p for p in out.rglob("*") if p.is_file())
    return files


def test_11_command_determinism(tmp_path):
    first = _run_all_commands(tmp_path, "run1")
    second = _run_all_commands(tmp_path, "run2")
    assert [p.name for p in first] == [p.name for p in second]
    mismatched = [
        a.name for a, b in zip(first, second)
        if not filecmp.cmp(a, b, shallow=False)
    ]
    report(11, "identical bytes from repeated seeded commands",
           not mismatched, f"({len(first)} files compared{', differs: ' + str(mismatched) if mismatched else ''})")
