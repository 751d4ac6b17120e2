"""Acceptance criteria: one test per criterion, one printed line each.

Every test computes its measured quantities first, records a single
"ACC<n> PASS/FAIL: ..." line via conftest.record, then asserts the criterion
exactly as stated. Three clauses encode reference targets this implementation
does not meet, and they are left failing deliberately rather than weakened:

  ACC2: the Q-function surrogate behind the closed forms overshoots its 15%
        tolerance in the far tail (large decision offsets), peaking at ~25%.
        The quadrature-vs-simulation clause passes, so the gap is purely the
        surrogate's.
  ACC4: false-alarm transmissions append usable measurements, so the noisy
        protocol accumulates rows faster than its idealized variant and both
        it and the random baseline reach exact recovery (MSE ~ 1e-29) by
        round 3; the expected ordering and 2x margin compare floating-point
        noise and an inverted pair.
  ACC5: with this penalized solver plus least-squares refit, 20 random rows
        already recover a 3-sparse scene in every seeded run, so the random
        baseline ties the guided protocol instead of trailing it strictly.
"""

import math
import time

import numpy as np
import pytest
import scipy.fft

from conftest import record

from dasense.analytics import (
    prob_fa_closed,
    prob_fa_exact,
    prob_md_closed,
    prob_md_exact,
)
from dasense.cli import export_trace, parse_args
from dasense.downlink import LinkParams, compute_sinr
from dasense.engine import ProtocolConfig, run_downlink_trials, run_experiment
from dasense.recovery import MeasurementSet, default_penalty, kkt_gaps, lasso_solve
from dasense.scene import dct_matrix, generate_scene
from dasense.selection import select_corr_normalized

OMEGA = 0.1
U_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def preset_configs(preset_args):
    plan = parse_args(preset_args)
    (job,) = plan.jobs
    return job.configs


def test_acc1_request_error_counts_at_heavy_load():
    t0 = time.monotonic()
    (config,) = preset_configs(["--preset", "fig4", "--n", "50"])
    counts = run_downlink_trials(config).mean_counts(1)
    elapsed = time.monotonic() - t0
    ok = 38.0 <= counts["fa"] <= 53.0 and 16.0 <= counts["md"] <= 24.0 and elapsed < 60.0
    record(
        f"ACC1 {'PASS' if ok else 'FAIL'}: mean FA {counts['fa']:.2f} in [38, 53], "
        f"mean MD {counts['md']:.2f} in [16, 24], {elapsed:.1f} s"
    )
    assert 38.0 <= counts["fa"] <= 53.0
    assert 16.0 <= counts["md"] <= 24.0
    assert elapsed < 60.0


def test_acc2_closed_form_and_simulation_consistency():
    # two operating points: request sizes 10 and 50 on the dense field
    worst_gap = 0.0
    gap_cells = 0
    worst_z = 0.0
    for n, trials in ((10, 10_000), (50, 2_000)):
        link = LinkParams(sig_len=64, request_size=n, omega=OMEGA,
                          ap_snr=100.0, scaled_decision=0.5)
        gamma = compute_sinr(link)
        h1 = link.per_node_power / link.busy_var
        for u in U_GRID:
            closed = {"fa": prob_fa_closed(gamma, u, OMEGA),
                      "md": prob_md_closed(gamma, u, OMEGA)}
            exact = {"fa": prob_fa_exact(gamma, u, OMEGA),
                     "md": prob_md_exact(gamma, u, OMEGA)}
            for key in ("fa", "md"):
                gap = abs(closed[key] - exact[key]) / exact[key]
                worst_gap = max(worst_gap, gap)
                gap_cells += gap > 0.15

            config = ProtocolConfig(
                num_nodes=300, basis_dim=100, sparsity=10, request_size=n,
                sig_len=64, rounds=1, runs=trials, selector="corrnorm",
                protocol="das", seed=1, mode="gaussian", omega=OMEGA,
                ap_snr=100.0, scaled_decision=u)
            counts = run_downlink_trials(config).mean_counts(1)
            samples = {"md": trials * n, "fa": trials * (300 - n)}
            rates = {"md": counts["md"] / n, "fa": counts["fa"] / (300 - n)}
            targets = {"fa": exact["fa"],
                       "md": prob_md_exact(gamma, u, OMEGA, h1_sinr=h1)}
            for key in ("fa", "md"):
                se = math.sqrt(targets[key] * (1 - targets[key]) / samples[key])
                worst_z = max(worst_z, abs(rates[key] - targets[key]) / se)
    chiani_ok = gap_cells == 0
    mc_ok = worst_z <= 3.0
    ok = chiani_ok and mc_ok
    record(
        f"ACC2 {'PASS' if ok else 'FAIL'}: closed-vs-exact worst gap "
        f"{100 * worst_gap:.1f}% with {gap_cells}/36 cells over 15%; "
        f"simulation-vs-exact worst |z| {worst_z:.2f} (limit 3)"
    )
    assert mc_ok
    assert chiani_ok, (
        f"{gap_cells} cells exceed the 15% closed-form tolerance "
        f"(worst {100 * worst_gap:.1f}%)"
    )


def test_acc3_missed_detection_floor():
    floor = 1.0 - math.exp(-OMEGA)
    gammas = np.logspace(-2, 4, 61)
    values = [prob_md_closed(float(g), 0.5, OMEGA) for g in gammas]
    above = all(v >= floor - 1e-12 for v in values)
    top_excess = values[-1] / floor - 1.0
    ok = above and top_excess <= 0.01
    record(
        f"ACC3 {'PASS' if ok else 'FAIL'}: min MD {min(values):.6f} >= floor "
        f"{floor:.6f}, top-of-grid excess {100 * top_excess:.3f}% (limit 1%)"
    )
    assert above
    assert top_excess <= 0.01


def test_acc4_protocol_error_ordering():
    configs = preset_configs(["--preset", "fig6", "--runs", "500"])
    mse = {}
    for config in configs:
        mse[config.protocol] = run_experiment(config).mean_sq_error(3)
    ordering_ok = mse["das_ideal"] <= mse["das"] < mse["rrs"]
    margin_ok = mse["rrs"] >= 2.0 * mse["das"]
    ok = ordering_ok and margin_ok
    record(
        f"ACC4 {'PASS' if ok else 'FAIL'}: round-3 MSE das_ideal {mse['das_ideal']:.3g}, "
        f"das {mse['das']:.3g}, rrs {mse['rrs']:.3g}; "
        f"need das_ideal <= das < rrs with rrs >= 2x das"
    )
    assert ordering_ok, (
        f"ordering das_ideal <= das < rrs does not hold: {mse}"
    )
    assert margin_ok, f"rrs/das = {mse['rrs'] / mse['das']:.2f} < 2"


def test_acc5_small_field_exact_recovery():
    configs = preset_configs(["--preset", "fig3"])
    fraction = {}
    for config in configs:
        trace = run_experiment(config)
        hits = 0
        for run in trace.runs:
            scene = generate_scene(config.num_nodes, config.basis_dim,
                                   config.sparsity, run.scene_seed)
            hits += bool(np.max(np.abs(run.final_coeffs - scene.coeffs)) < 1e-6)
        fraction[config.protocol] = hits / len(trace.runs)
    ideal_ok = fraction["das_ideal"] >= 0.90
    strict_ok = fraction["rrs"] < fraction["das_ideal"]
    ok = ideal_ok and strict_ok
    record(
        f"ACC5 {'PASS' if ok else 'FAIL'}: exact-recovery fraction das_ideal "
        f"{fraction['das_ideal']:.3f} (need >= 0.90), rrs {fraction['rrs']:.3f} "
        f"(need strictly smaller)"
    )
    assert ideal_ok
    assert strict_ok, (
        f"rrs matches das_ideal at {fraction['rrs']:.3f}; no strict gap"
    )


def test_acc6_capacity_gate_detection():
    rates = {}
    for n in (50, 10):
        (config,) = preset_configs(["--preset", "fig4", "--n", str(n)])
        rates[n] = run_downlink_trials(config).mean_counts(1)["cra_success"]
    overload_ok = rates[50] < 0.5
    light_ok = rates[10] > 0.99
    ok = overload_ok and light_ok
    record(
        f"ACC6 {'PASS' if ok else 'FAIL'}: gate pass rate {rates[50]:.3f} at "
        f"request size 50 (need < 0.5), {rates[10]:.4f} at 10 (need > 0.99)"
    )
    assert overload_ok
    assert light_ok


def test_acc7_property_suites(tmp_path):
    # lasso optimality certificates on random compressive instances
    rng = np.random.default_rng(7)
    worst_kkt = 0.0
    for _ in range(100):
        k = int(rng.integers(40, 120))
        m = int(rng.integers(10, min(k, 60)))
        s = int(rng.integers(1, max(2, m // 3)))
        scene = generate_scene(k, m, s, int(rng.integers(1, 2**31)))
        ids = sorted(rng.choice(k, size=int(rng.integers(s + 1, m + 1)),
                                replace=False).tolist())
        meas = MeasurementSet.from_scene(scene, ids)
        penalty = default_penalty(meas)
        # certificate-grade solve: sweep tolerance well below the 1e-6 gap bound
        fit = lasso_solve(meas, penalty, tol=1e-12, max_iter=100_000)
        worst_kkt = max(worst_kkt, *kkt_gaps(meas, fit.coeffs, penalty))
    kkt_ok = worst_kkt <= 1e-6

    # transform orthonormality at the dense field size
    d = dct_matrix(300)
    ortho_dev = float(np.max(np.abs(d.T @ d - np.eye(300))))
    ortho_ok = ortho_dev <= 1e-12
    assert np.allclose(d, scipy.fft.dct(np.eye(300), type=2, norm="ortho", axis=0),
                       atol=1e-13)

    # greedy selector equals a literal re-evaluation of its objective
    mismatches = 0
    for trial in range(30):
        trial_rng = np.random.default_rng(100 + trial)
        k = int(trial_rng.integers(12, 65))
        m = int(trial_rng.integers(4, min(k, 25)))
        scene = generate_scene(k, m, min(3, m), 500 + trial)
        coeffs = trial_rng.normal(size=m)
        pool = sorted(trial_rng.choice(k, size=int(trial_rng.integers(4, k + 1)),
                                       replace=False).tolist())
        acquired = [i for i in range(k) if i not in pool][: max(1, k // 8)]
        count = int(trial_rng.integers(1, min(6, len(pool)) + 1))
        got = select_corr_normalized(coeffs, scene.basis, acquired, pool, count)
        acq = list(acquired)
        expected = []
        remaining = list(pool)
        for _ in range(count):
            best_node, best_score = None, -1.0
            for node in remaining:
                b = scene.basis[:, node]
                strength = float(b @ coeffs) ** 2
                worst = max(
                    (float(b @ scene.basis[:, j]) ** 2 for j in acq), default=0.0
                )
                score = strength / max(worst, 1e-12)
                if score > best_score:
                    best_node, best_score = node, score
            expected.append(best_node)
            remaining.remove(best_node)
            acq.append(best_node)
        mismatches += got != expected
    selector_ok = mismatches == 0

    # nested acquisition and budget matching over paired runs
    base = dict(num_nodes=64, basis_dim=25, sparsity=3, request_size=5,
                sig_len=64, rounds=2, runs=100, selector="corrnorm", seed=9,
                mode="gaussian", omega=0.1, ap_snr=100.0, scaled_decision=0.5)
    das = run_experiment(ProtocolConfig(protocol="das", **base))
    rrs = run_experiment(ProtocolConfig(protocol="rrs", **base))
    budget_ok = True
    for run_das, run_rrs in zip(das.runs, rrs.runs):
        for run in (run_das, run_rrs):
            seen: set[int] = set()
            for appended in run.appended:
                budget_ok &= not (set(appended) & seen)
                seen.update(appended)
        budget_ok &= [len(a) for a in run_das.appended] == [
            len(a) for a in run_rrs.appended
        ]

    # two executions of one config produce byte-identical trace files
    paths = []
    for name in ("first.csv", "second.csv"):
        trace = run_experiment(ProtocolConfig(**base, protocol="das"))
        path = tmp_path / name
        export_trace(trace, "csv", str(path))
        paths.append(path)
    determinism_ok = paths[0].read_bytes() == paths[1].read_bytes()

    ok = kkt_ok and ortho_ok and selector_ok and budget_ok and determinism_ok
    record(
        f"ACC7 {'PASS' if ok else 'FAIL'}: lasso certificate max gap {worst_kkt:.2e}, "
        f"transform deviation {ortho_dev:.2e}, selector mismatches {mismatches}/30, "
        f"budget pairing {'ok' if budget_ok else 'BROKEN'}, "
        f"csv determinism {'byte-identical' if determinism_ok else 'DIVERGED'}"
    )
    assert kkt_ok
    assert ortho_ok
    assert selector_ok
    assert budget_ok
    assert determinism_ok


def test_acc8_error_rate_monotonicity():
    link = LinkParams(sig_len=64, request_size=10, omega=OMEGA,
                      ap_snr=100.0, scaled_decision=0.5)
    gamma = compute_sinr(link)
    h1 = link.per_node_power / link.busy_var
    md_rates, fa_rates = [], []
    for u in U_GRID:
        config = ProtocolConfig(
            num_nodes=300, basis_dim=100, sparsity=10, request_size=10,
            sig_len=64, rounds=1, runs=1500, selector="corrnorm",
            protocol="das", seed=1, mode="gaussian", omega=OMEGA,
            ap_snr=100.0, scaled_decision=u)
        counts = run_downlink_trials(config).mean_counts(1)
        md_rates.append(counts["md"] / 10)
        fa_rates.append(counts["fa"] / 290)
    md_monotone = all(b >= a for a, b in zip(md_rates, md_rates[1:]))
    fa_monotone = all(b <= a for a, b in zip(fa_rates, fa_rates[1:]))
    endpoint_ok = True
    for u, md, fa in ((0.1, md_rates[0], fa_rates[0]),
                      (0.9, md_rates[-1], fa_rates[-1])):
        for rate, target, samples in (
            (md, prob_md_exact(gamma, u, OMEGA, h1_sinr=h1), 1500 * 10),
            (fa, prob_fa_exact(gamma, u, OMEGA), 1500 * 290),
        ):
            se = math.sqrt(target * (1 - target) / samples)
            endpoint_ok &= abs(rate - target) <= 3.0 * se
    ok = md_monotone and fa_monotone and endpoint_ok
    record(
        f"ACC8 {'PASS' if ok else 'FAIL'}: MD rises {md_rates[0]:.3f} -> "
        f"{md_rates[-1]:.3f} ({'monotone' if md_monotone else 'NOT monotone'}), "
        f"FA falls {fa_rates[0]:.4f} -> {fa_rates[-1]:.4f} "
        f"({'monotone' if fa_monotone else 'NOT monotone'}), endpoints within "
        f"3 standard errors of the exact rates: {endpoint_ok}"
    )
    assert md_monotone
    assert fa_monotone
    assert endpoint_ok
