"""Acceptance battery: one end-to-end test per shipped guarantee.

Each test prints a single [PASS]/[FAIL] summary line (outside pytest's
capture, so the lines are visible in a normal run) and then asserts.
Budgets and tolerances here are the advertised ones; the suite is meant
to be slow but decisive.
"""

import math
import re
import time

import numpy as np
import pytest

from degensde import (
    ConstantFamily,
    CoefficientError,
    CubicDriftFamily,
    ExperimentConfig,
    PowerLawFamily,
    SimConfig,
    admissible_alpha_bound,
    brownian_increments,
    check_h2,
    check_h3_window,
    em_coupled_pair,
    em_path,
    run_experiment,
    select_exponents,
)

POWER_LAW = {"name": "power_law", "dim": 3, "alpha": 0.3}


def announce(capsys, number, failures, detail, t0):
    elapsed = time.perf_counter() - t0
    tag = "PASS" if not failures else "FAIL"
    with capsys.disabled():
        print(f"\n[{tag}] criterion {number}: {detail} ({elapsed:.1f} s)")


def finish(capsys, number, failures, detail, t0, limit):
    elapsed = time.perf_counter() - t0
    if elapsed >= limit:
        failures.append(f"runtime {elapsed:.1f} s exceeds the {limit:g} s budget")
    announce(capsys, number, failures, detail, t0)
    assert not failures, failures


def verdict_map(report):
    return {v["name"]: v["passed"] for v in report.verdicts}


def estimate_map(report):
    return {e["parameter"]: e for e in report.estimates}


def neutral_timestamp(report):
    return re.sub(r'"timestamp": "[^"]*"', '"timestamp": null', report.to_json())


def test_criterion_1_hypothesis_checkers(capsys):
    t0 = time.perf_counter()
    failures = []
    n_checked = 0
    for dim in (3, 4, 5):
        bound = admissible_alpha_bound(dim)
        center = np.zeros(dim)
        center[0] = 2.0
        for alpha in (0.0, 0.1, 0.8 * bound):
            coeffs = PowerLawFamily(dim=dim, alpha=alpha).build()
            h2 = check_h2(coeffs, 1)
            if not (h2.feasible and h2.m_star is not None and math.isfinite(h2.m_star)):
                failures.append(f"H2 not feasible for d={dim}, alpha={alpha}")
            h3 = check_h3_window(coeffs, center, 0.5)
            if not h3.ok:
                failures.append(f"H3 window failed for d={dim}, alpha={alpha}")
            n_checked += 1
    cubic = CubicDriftFamily(dim=3).build()
    h2_cubic = check_h2(cubic, 1)
    if h2_cubic.feasible:
        failures.append("cubic drift control was not rejected by H2")
    if not (np.all(np.isfinite(h2_cubic.witness)) and h2_cubic.witness_ratio > h2_cubic.ratio_cap):
        failures.append("cubic drift rejection lacks a finite witness point")
    finish(
        capsys,
        1,
        failures,
        f"growth and window checks pass for {n_checked} admissible families; "
        "cubic control rejected with witness",
        t0,
        limit=10.0,
    )


def test_criterion_2_exponent_selection(capsys):
    t0 = time.perf_counter()
    failures = []
    sel = select_exponents(3, 0.3, 1.0)
    checks = [
        (sel.q_interval[0], 8.0, "q interval left endpoint"),
        (sel.q_interval[1], 10.0, "q interval right endpoint"),
        (sel.q_tilde_interval[0], 1.5, "q_tilde interval left endpoint"),
        (sel.q_tilde_interval[1], 30.0 / 17.0, "q_tilde interval right endpoint"),
    ]
    for value, target, label in checks:
        if abs(value - target) > 1e-9:
            failures.append(f"{label} {value!r} misses {target!r}")
    if abs(sel.q - 9.0) > 1e-12:
        failures.append(f"q midpoint {sel.q!r} is not 9.0")
    if abs(sel.q_tilde - 1.6323529411764706) > 1e-12:
        failures.append(f"q_tilde midpoint {sel.q_tilde!r} is off")
    try:
        select_exponents(3, 0.375, 1.0)
        failures.append("alpha = 0.375 was not rejected for d = 3")
    except CoefficientError:
        pass
    finish(
        capsys,
        2,
        failures,
        f"(q, q_tilde) = ({sel.q:g}, {sel.q_tilde:.6g}) inside the admissible "
        "intervals; boundary alpha rejected",
        t0,
        limit=1.0,
    )


def test_criterion_3_maximal_battery(capsys):
    t0 = time.perf_counter()
    failures = []
    config = ExperimentConfig(
        kind="maximal_suite",
        budget=10_000,
        params={
            "dim": 3,
            "half_extent": 2.0,
            "resolution": 64,
            "refine_resolution": 96,
            "seed": 0,
        },
    )
    report = run_experiment(config)
    verdicts = verdict_map(report)
    for name in (
        "domination",
        "sublinearity",
        "scaling",
        "lp_ratio_stability",
        "pair_bound_fraction",
    ):
        if not verdicts[name]:
            failures.append(f"verdict {name} failed")
    frac = estimate_map(report)["pair_bound_fraction"]["value"]
    if frac < 0.99:
        failures.append(f"pair bound fraction {frac:.4f} < 0.99")
    if report.constants["empirical_pair_constant"] > 8.0:
        failures.append("observed pair constant exceeds 2^3 = 8")
    drift = max(report.constants["lp_ratio_drift"].values())
    if drift > 0.2:
        failures.append(f"L^r ratio drift {drift:.3f} exceeds 20%")
    finish(
        capsys,
        3,
        failures,
        f"64^3 battery: domination, sublinearity, scaling exact; pair bound "
        f"holds on {frac:.2%} of 10^4 pairs; refinement drift {drift:.3g}",
        t0,
        limit=300.0,
    )


def test_criterion_4_simulator_exactness(capsys):
    t0 = time.perf_counter()
    failures = []
    cfg = SimConfig(step=2.0**-8, horizon=1.0, seed=2024)

    additive = ConstantFamily(dim=3, value=1.0).build()
    y = np.array([1.0, 0.0, 0.0])
    for idx in range(32):
        path = em_path(additive, y, cfg, path_index=idx)
        direct = brownian_increments(cfg.seed, idx, cfg.n_steps, 3, cfg.step)
        if path.brownian_increments.tobytes() != direct.tobytes():
            failures.append(f"path {idx}: stored increments differ from the generator")
            break
        expected = y + np.cumsum(direct, axis=0)
        if path.states[1:].tobytes() != expected.tobytes():
            failures.append(f"path {idx}: additive path deviates from increment sums")
            break

    coupled = PowerLawFamily(dim=3, alpha=0.3).build()
    zero_paths = 0
    for idx in range(1000):
        pair = em_coupled_pair(coupled, y, y, cfg, path_index=idx)
        if pair.difference.tobytes() != bytes(pair.difference.nbytes):
            failures.append(f"coupled pair {idx} has a nonzero difference")
            break
        zero_paths += 1
    finish(
        capsys,
        4,
        failures,
        "additive paths equal increment sums bit for bit; "
        f"{zero_paths} coupled pairs from equal starts stay identically zero",
        t0,
        limit=30.0,
    )


NONEXPLOSION_CONFIG = ExperimentConfig(
    kind="nonexplosion",
    budget=10_000,
    family=dict(POWER_LAW),
    sim=SimConfig(step=1e-3, horizon=1.0, seed=501),
    start=(2.0, 0.0, 0.0),
)


def test_criterion_5_nonexplosion(capsys):
    t0 = time.perf_counter()
    failures = []
    report = run_experiment(NONEXPLOSION_CONFIG, threads=4)
    if not report.passed:
        failures.append("degenerate family run reported explosions")
    if report.constants["n_exploded"] != 0:
        failures.append(f"{report.constants['n_exploded']} paths exploded")

    control = ExperimentConfig(
        kind="nonexplosion",
        budget=1000,
        family={"name": "cubic_drift", "dim": 3},
        sim=SimConfig(step=1e-4, horizon=1.0, seed=502, explosion_threshold=1e6),
        start=(2.0, 0.0, 0.0),
    )
    control_report = run_experiment(control, threads=4)
    control_frac = estimate_map(control_report)["exploded_fraction"]["value"]
    if control_report.passed:
        failures.append("cubic control unexpectedly passed")
    if control_frac < 0.99:
        failures.append(f"cubic control exploded fraction {control_frac:.3f} < 0.99")
    finish(
        capsys,
        5,
        failures,
        "0 of 10^4 degenerate paths explode; cubic control explodes "
        f"{control_frac:.1%}",
        t0,
        limit=600.0,
    )


def test_criterion_6_occupation_decay(capsys):
    t0 = time.perf_counter()
    failures = []
    config = ExperimentConfig(
        kind="occupation_decay",
        budget=10_000,
        family=dict(POWER_LAW),
        sim=SimConfig(step=1e-3, horizon=1.0, seed=601),
        start=(1.0, 0.0, 0.0),
    )
    report = run_experiment(config, threads=4)
    verdicts = verdict_map(report)
    for name in (
        "start_point_admissible",
        "occupation_nonincreasing",
        "smallest_eps_occupation_small",
    ):
        if not verdicts[name]:
            failures.append(f"verdict {name} failed")
    smallest = estimate_map(report)["occupation_eps_0.05"]["value"]
    if not smallest < 0.01 * 1.0:
        failures.append(f"eps = 0.05 occupation {smallest:.4g} is not < 0.01 T")

    control = ExperimentConfig(
        kind="occupation_decay",
        budget=1000,
        family=dict(POWER_LAW),
        sim=SimConfig(step=1e-3, horizon=1.0, seed=602),
        start=(0.0, 0.0, 0.0),
    )
    control_report = run_experiment(control, threads=4)
    if control_report.passed:
        failures.append("degenerate-start control unexpectedly passed")
    finish(
        capsys,
        6,
        failures,
        f"occupation decays over the eps ladder (smallest {smallest:.2g}); "
        "degenerate-start control fails",
        t0,
        limit=600.0,
    )


def test_criterion_7_occupation_bound_ratios(capsys):
    t0 = time.perf_counter()
    failures = []
    config = ExperimentConfig(
        kind="krylov",
        budget=10_000,
        family=dict(POWER_LAW),
        sim=SimConfig(step=1e-3, horizon=1.0, seed=701),
        start=(1.0, 0.0, 0.0),
    )
    report = run_experiment(config, threads=4)
    verdicts = verdict_map(report)
    if not verdicts["ratio_spread_bounded"]:
        failures.append("ratio spread verdict failed")
    if not verdicts["spike_norm_constancy"]:
        failures.append("spike norms are not constant across scales")
    if abs(report.constants["q_tilde"] - 1.6323529411764706) > 1e-12:
        failures.append("experiment used a different q_tilde than criterion 2")
    if min(report.constants["hit_counts"]) == 0:
        failures.append("some spike was never hit at this budget")
    ratios = [estimate_map(report)[f"ratio_k{k}"]["value"] for k in (1, 2, 4, 8)]
    spread = max(ratios) / float(np.median(ratios))
    if not spread < 3.0:
        failures.append(f"max/median ratio spread {spread:.3f} is not < 3")
    finish(
        capsys,
        7,
        failures,
        f"normalized occupation ratios {['%.3g' % r for r in ratios]} "
        f"with spread {spread:.2f} < 3",
        t0,
        limit=600.0,
    )


UNIQUENESS_CONTROL_CONFIG = ExperimentConfig(
    kind="uniqueness",
    budget=1000,
    family={"name": "constant", "dim": 3, "value": 1.0},
    sim=SimConfig(step=2.0**-8, horizon=1.0, seed=802),
    start=(1.0, 0.0, 0.0),
    params={"levels": 4},
)


def test_criterion_8_refinement_convergence(capsys):
    t0 = time.perf_counter()
    failures = []
    config = ExperimentConfig(
        kind="uniqueness",
        budget=1000,
        family=dict(POWER_LAW),
        sim=SimConfig(step=2.0**-8, horizon=1.0, seed=801),
        start=(1.0, 0.0, 0.0),
        params={"levels": 4},
    )
    report = run_experiment(config, threads=4)
    est = estimate_map(report)
    e_values = [est[f"e_level{lvl}"]["value"] for lvl in range(3)]
    if not all(a > b for a, b in zip(e_values, e_values[1:])):
        failures.append(f"e values {e_values} are not strictly decreasing")
    slope = -float(
        np.polyfit(np.arange(3), [math.log2(e) for e in e_values], 1)[0]
    )
    if not slope >= 0.25:
        failures.append(f"log2 decay slope {slope:.3f} < 0.25")
    if not verdict_map(report)["self_convergence"]:
        failures.append("self convergence verdict failed")

    control_report = run_experiment(UNIQUENESS_CONTROL_CONFIG, threads=4)
    control_est = estimate_map(control_report)
    control_values = [control_est[f"e_level{lvl}"]["value"] for lvl in range(3)]
    if any(v != 0.0 for v in control_values):
        failures.append(f"additive control distances {control_values} are not all zero")
    if not control_report.passed:
        failures.append("additive control did not pass")
    finish(
        capsys,
        8,
        failures,
        f"inter-level distances decrease with slope {slope:.2f} >= 0.25; "
        "additive control is exactly zero",
        t0,
        limit=900.0,
    )


def test_criterion_9_reproducibility(capsys):
    t0 = time.perf_counter()
    failures = []
    pairs = [
        ("nonexplosion", NONEXPLOSION_CONFIG, 4),
        ("uniqueness control", UNIQUENESS_CONTROL_CONFIG, 1),
    ]
    for label, config, threads in pairs:
        first = run_experiment(config, threads=threads)
        second = run_experiment(config, threads=1)
        if neutral_timestamp(first) != neutral_timestamp(second):
            failures.append(f"{label}: reports differ between identical runs")
        if first.config_hash != second.config_hash:
            failures.append(f"{label}: config hash changed between runs")
    finish(
        capsys,
        9,
        failures,
        "identical configs reproduce byte-identical reports "
        "(timestamp aside), independent of thread count",
        t0,
        limit=600.0,
    )
