"""Multi-round acquisition protocols and Monte-Carlo aggregation.

One run draws a scene, collects an initial batch of readings from randomly
chosen feasible nodes (round 0), then alternates estimate -> select ->
request -> recover for Q more rounds. Four protocols share that loop:

* ``das``        selector-driven requests over the simulated downlink, so
                 missed detections and false alarms distort who transmits;
* ``das_ideal``  same selectors, error-free downlink (realized = requested
                 nodes that are power-feasible);
* ``rrs``        random selection, budget-matched per round to a shadow
                 replay of the reference protocol on identical randomness;
* ``oracle``     genie selection on the true readings, error-free downlink.

Every round the realized transmissions pass the random-access capacity gate:
at most L - 1 concurrent packets decode, a larger batch is lost entirely and
its nodes stay in the candidate pool.

Randomness is organised as named substreams of one master seed via
``SeedSequence(seed, spawn_key=(run, purpose, round))``, so any protocol
replays any other protocol's channel, noise, and initial picks exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .analytics import ErrorProbs
from .downlink import ChannelDraw, DownlinkOutcome, LinkParams, compute_sinr, draw_gains, simulate_request
from .recovery import (
    Estimate,
    MeasurementSet,
    debias,
    default_penalty,
    lasso_solve,
    reconstruct,
    squared_error,
)
from .scene import Scene, SignatureBook, generate_scene, generate_signatures
from .selection import (
    select_corr_normalized,
    select_magnitude,
    select_oracle,
    select_random,
)

__all__ = [
    "ProtocolConfig",
    "RoundRecord",
    "RunTrace",
    "Trace",
    "run_round0",
    "run_das_round",
    "run_rrs_round",
    "run_experiment",
    "run_downlink_trials",
]

PROTOCOLS = ("das", "das_ideal", "rrs", "oracle")
SELECTORS = ("random", "magnitude", "corrnorm", "oracle")

# spawn_key purposes; every consumer of randomness gets its own named stream
_SCENE, _ROUND0, _CHANNEL, _NOISE, _SELECT, _RRS, _SIGNATURES = range(7)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _derived_seed(seed: int, run: int, purpose: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(run, purpose)).generate_state(1)[0])


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one experiment needs; all randomness hangs off ``seed``."""

    num_nodes: int = 300
    basis_dim: int = 100
    sparsity: int = 10
    request_size: int = 10
    sig_len: int = 64
    rounds: int = 3
    runs: int = 100
    selector: str = "corrnorm"
    protocol: str = "das"
    seed: int = 1
    mode: str = "gaussian"
    omega: float = 0.1
    ap_snr: float = 100.0
    scaled_decision: float = 0.5
    noise_floor: float = 1.0
    penalty_scale: float = 0.01
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 10_000
    threshold_policy: str = "scaled"
    rrs_reference: str = "das"
    pin_basis: bool = False

    def __post_init__(self) -> None:
        if not (0 <= self.sparsity <= self.basis_dim <= self.num_nodes):
            raise ValueError("need 0 <= sparsity <= basis_dim <= num_nodes")
        if not (1 <= self.request_size <= self.num_nodes):
            raise ValueError("need 1 <= request_size <= num_nodes")
        if self.rounds < 0 or self.runs < 1:
            raise ValueError("need rounds >= 0 and runs >= 1")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}")
        if self.rrs_reference not in ("das", "das_ideal"):
            raise ValueError("rrs_reference must be 'das' or 'das_ideal'")
        if self.mode not in ("waveform", "gaussian"):
            raise ValueError("mode must be 'waveform' or 'gaussian'")
        self.link()  # validates omega, ap_snr, scaled_decision, noise_floor

    def link(self) -> LinkParams:
        return LinkParams(
            sig_len=self.sig_len,
            request_size=self.request_size,
            omega=self.omega,
            ap_snr=self.ap_snr,
            scaled_decision=self.scaled_decision,
            noise_floor=self.noise_floor,
        )

    def error_probs(self) -> ErrorProbs:
        return ErrorProbs.from_closed(
            compute_sinr(self.link()), self.scaled_decision, self.omega
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RoundRecord:
    """Counters for one protocol round (round 0 is the seeding round)."""

    round_index: int
    requested: int
    realized: int
    md: int
    fa: int
    cra_success: bool
    acquired_total: int
    sq_error: float


@dataclass
class RunTrace:
    run_index: int
    scene_seed: int
    records: list[RoundRecord] = field(default_factory=list)
    appended: list[list[int]] = field(default_factory=list)
    final_coeffs: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class Trace:
    """All runs of one (config, protocol) experiment."""

    config: ProtocolConfig
    runs: list[RunTrace] = field(default_factory=list)

    def records_at(self, round_index: int) -> list[RoundRecord]:
        return [
            rec
            for run in self.runs
            for rec in run.records
            if rec.round_index == round_index
        ]

    def mean_sq_error(self, round_index: int) -> float:
        recs = self.records_at(round_index)
        if not recs:
            raise ValueError(f"no records at round {round_index}")
        return float(np.mean([rec.sq_error for rec in recs]))

    def mean_counts(self, round_index: int) -> dict:
        recs = self.records_at(round_index)
        if not recs:
            raise ValueError(f"no records at round {round_index}")
        return {
            "requested": float(np.mean([r.requested for r in recs])),
            "realized": float(np.mean([r.realized for r in recs])),
            "md": float(np.mean([r.md for r in recs])),
            "fa": float(np.mean([r.fa for r in recs])),
            "cra_success": float(np.mean([r.cra_success for r in recs])),
        }

    def all_cra_failed(self) -> bool:
        """True when no run ever passed the capacity gate past round 0."""
        later = [
            rec
            for run in self.runs
            for rec in run.records
            if rec.round_index >= 1
        ]
        return bool(later) and not any(rec.cra_success for rec in later)

    def to_rows(self) -> list[dict]:
        rows = []
        for run in self.runs:
            for rec in run.records:
                rows.append(
                    {
                        "run": run.run_index,
                        "round": rec.round_index,
                        "protocol": self.config.protocol,
                        "requested": rec.requested,
                        "realized": rec.realized,
                        "md": rec.md,
                        "fa": rec.fa,
                        "cra_success": rec.cra_success,
                        "acquired_total": rec.acquired_total,
                        "sq_error": rec.sq_error,
                    }
                )
        return rows


@dataclass
class _RunState:
    scene: Scene
    acquired: list[int]
    meas: MeasurementSet | None = None
    estimate: Estimate | None = None
    sq_error: float = float("nan")
    lasso_failures: int = 0
    flags: list[str] = field(default_factory=list)


def _recover(state: _RunState, config: ProtocolConfig) -> None:
    """Lasso + debias + reconstruct on the accumulated measurement set."""
    meas = state.meas
    if meas is None or len(meas) == 0:
        state.estimate = None
        coeffs = np.zeros(config.basis_dim)
        state.sq_error = squared_error(
            state.scene.readings, reconstruct(state.scene.basis, coeffs)
        )
        return
    penalty = default_penalty(meas, config.penalty_scale)
    warm = state.estimate.coeffs if state.estimate is not None else None
    fit = lasso_solve(
        meas,
        penalty,
        tol=config.lasso_tol,
        max_iter=config.lasso_max_iter,
        warm_start=warm,
    )
    if not fit.converged:
        state.lasso_failures += 1
    refit = debias(fit.coeffs, meas)
    readings = reconstruct(state.scene.basis, refit.coeffs)
    state.estimate = Estimate(
        coeffs=refit.coeffs,
        readings=readings,
        objective=fit.objective,
        sweeps=fit.sweeps,
    )
    state.sq_error = squared_error(state.scene.readings, readings)


def _candidates(state: _RunState) -> np.ndarray:
    mask = np.ones(state.scene.num_nodes, dtype=bool)
    if state.acquired:
        mask[state.acquired] = False
    return np.flatnonzero(mask)


def _append(state: _RunState, node_ids: list[int]) -> None:
    ordered = sorted(int(k) for k in node_ids)
    if state.meas is None:
        state.meas = MeasurementSet.from_scene(state.scene, ordered)
    else:
        state.meas = state.meas.extended(state.scene, ordered)
    state.acquired.extend(ordered)


def run_round0(
    scene: Scene,
    config: ProtocolConfig,
    pick_rng: np.random.Generator,
    channel_rng: np.random.Generator,
) -> tuple[_RunState, RoundRecord, list[int]]:
    """Seeding round: a uniform batch of power-feasible nodes transmits.

    No request is sent, so there are no detection errors; the batch still
    has to pass the capacity gate.
    """
    state = _RunState(scene=scene, acquired=[])
    draw = draw_gains(scene.num_nodes, channel_rng)
    feasible = np.flatnonzero(draw.gains >= config.omega)
    if feasible.size < config.request_size:
        state.flags.append(f"round0-shortfall:{feasible.size}")
    picks = select_random(feasible, config.request_size, pick_rng)
    gate_ok = len(picks) <= config.sig_len - 1
    appended: list[int] = []
    if gate_ok:
        appended = sorted(picks)
        _append(state, appended)
    _recover(state, config)
    record = RoundRecord(
        round_index=0,
        requested=config.request_size,
        realized=len(picks),
        md=0,
        fa=0,
        cra_success=gate_ok,
        acquired_total=len(state.acquired),
        sq_error=state.sq_error,
    )
    return state, record, appended


def _select(
    state: _RunState,
    config: ProtocolConfig,
    selector: str,
    candidates: np.ndarray,
    count: int,
    select_rng: np.random.Generator,
) -> list[int]:
    if selector == "random":
        return select_random(candidates, count, select_rng)
    if selector == "oracle":
        return select_oracle(state.scene.readings, candidates, count)
    est = state.estimate
    coeffs = est.coeffs if est is not None else np.zeros(config.basis_dim)
    if selector == "magnitude":
        readings = est.readings if est is not None else np.zeros(config.num_nodes)
        return select_magnitude(readings, candidates, count)
    if selector == "corrnorm":
        return select_corr_normalized(
            coeffs, state.scene.basis, state.acquired, candidates, count
        )
    raise ValueError(f"unknown selector {selector!r}")


def run_das_round(
    state: _RunState,
    config: ProtocolConfig,
    round_index: int,
    signatures: SignatureBook | None,
    channel_rng: np.random.Generator,
    noise_rng: np.random.Generator,
    select_rng: np.random.Generator,
    ideal: bool,
    selector: str,
) -> tuple[RoundRecord, list[int]]:
    """One selector-driven request round; mutates ``state``."""
    candidates = _candidates(state)
    requested = _select(
        state, config, selector, candidates, config.request_size, select_rng
    )
    draw = draw_gains(state.scene.num_nodes, channel_rng)
    if ideal:
        req = np.asarray(sorted(requested), dtype=np.int64)
        feasible = req[draw.gains[req] >= config.omega]
        outcome = DownlinkOutcome(
            requested=req,
            listeners=np.asarray(sorted(candidates), dtype=np.int64),
            realized=feasible,
            md_events=req[draw.gains[req] < config.omega],
            fa_events=np.empty(0, dtype=np.int64),
            statistic=np.empty(0),
        )
    else:
        map_tau = None
        if config.threshold_policy == "map":
            remaining = max(config.num_nodes - round_index * config.request_size, 1)
            map_tau = float(np.log(remaining / config.request_size))
        outcome = simulate_request(
            requested,
            candidates,
            signatures,
            draw,
            config.link(),
            mode=config.mode,
            rng=noise_rng,
            threshold_policy=config.threshold_policy,
            map_tau=map_tau,
        )
    gate_ok = outcome.realized.size <= config.sig_len - 1
    appended: list[int] = []
    if gate_ok and outcome.realized.size:
        appended = sorted(int(k) for k in outcome.realized)
        _append(state, appended)
        _recover(state, config)
    # failed gate or empty batch: estimate carries over unchanged
    record = RoundRecord(
        round_index=round_index,
        requested=len(requested),
        realized=int(outcome.realized.size),
        md=int(outcome.md_events.size),
        fa=int(outcome.fa_events.size),
        cra_success=gate_ok,
        acquired_total=len(state.acquired),
        sq_error=state.sq_error,
    )
    return record, appended


def run_rrs_round(
    state: _RunState,
    config: ProtocolConfig,
    round_index: int,
    matched_count: int,
    rrs_rng: np.random.Generator,
) -> tuple[RoundRecord, list[int]]:
    """Budget-matched random round: exactly ``matched_count`` fresh readings."""
    appended: list[int] = []
    if matched_count > 0:
        candidates = _candidates(state)
        picks = select_random(candidates, matched_count, rrs_rng)
        if picks:
            appended = sorted(picks)
            _append(state, appended)
            _recover(state, config)
    record = RoundRecord(
        round_index=round_index,
        requested=matched_count,
        realized=len(appended),
        md=0,
        fa=0,
        cra_success=True,
        acquired_total=len(state.acquired),
        sq_error=state.sq_error,
    )
    return record, appended


def _replay_reference(
    scene: Scene,
    config: ProtocolConfig,
    run_index: int,
    signatures: SignatureBook | None,
) -> list[int]:
    """Run the rrs reference protocol on this run's streams; per-round budgets."""
    ref = _protocol_flavor(config.rrs_reference, config.selector)
    state, _, appended0 = run_round0(
        scene,
        config,
        _stream(config.seed, run_index, _ROUND0),
        _stream(config.seed, run_index, _CHANNEL, 0),
    )
    budgets = []
    for q in range(1, config.rounds + 1):
        _, appended = run_das_round(
            state,
            config,
            q,
            signatures,
            _stream(config.seed, run_index, _CHANNEL, q),
            _stream(config.seed, run_index, _NOISE, q),
            _stream(config.seed, run_index, _SELECT, q),
            ideal=ref.ideal,
            selector=ref.selector,
        )
        budgets.append(len(appended))
    return budgets


@dataclass(frozen=True)
class _Flavor:
    ideal: bool
    selector: str


def _protocol_flavor(protocol: str, selector: str) -> _Flavor:
    if protocol == "das":
        return _Flavor(ideal=False, selector=selector)
    if protocol == "das_ideal":
        return _Flavor(ideal=True, selector=selector)
    if protocol == "oracle":
        return _Flavor(ideal=True, selector="oracle")
    raise ValueError(f"no request flavor for protocol {protocol!r}")


def _simulate_run(config: ProtocolConfig, run_index: int, basis_rows) -> RunTrace:
    scene_seed = _derived_seed(config.seed, run_index, _SCENE)
    scene = generate_scene(
        config.num_nodes, config.basis_dim, config.sparsity, scene_seed, basis_rows
    )
    signatures = None
    if config.mode == "waveform" and config.protocol in ("das", "rrs"):
        signatures = generate_signatures(
            config.sig_len,
            config.num_nodes,
            _derived_seed(config.seed, run_index, _SIGNATURES),
        )

    trace = RunTrace(run_index=run_index, scene_seed=scene_seed)

    budgets: list[int] | None = None
    if config.protocol == "rrs":
        budgets = _replay_reference(scene, config, run_index, signatures)

    state, record0, appended0 = run_round0(
        scene,
        config,
        _stream(config.seed, run_index, _ROUND0),
        _stream(config.seed, run_index, _CHANNEL, 0),
    )
    trace.records.append(record0)
    trace.appended.append(appended0)
    trace.flags.extend(state.flags)

    for q in range(1, config.rounds + 1):
        if config.protocol == "rrs":
            record, appended = run_rrs_round(
                state, config, q, budgets[q - 1], _stream(config.seed, run_index, _RRS, q)
            )
        else:
            flavor = _protocol_flavor(config.protocol, config.selector)
            if _candidates(state).size == 0:
                trace.flags.append(f"exhausted-at-round:{q}")
                break
            record, appended = run_das_round(
                state,
                config,
                q,
                signatures,
                _stream(config.seed, run_index, _CHANNEL, q),
                _stream(config.seed, run_index, _NOISE, q),
                _stream(config.seed, run_index, _SELECT, q),
                ideal=flavor.ideal,
                selector=flavor.selector,
            )
        trace.records.append(record)
        trace.appended.append(appended)

    if state.lasso_failures:
        trace.flags.append(f"lasso-nonconverged:{state.lasso_failures}")
    if state.estimate is not None:
        trace.final_coeffs = state.estimate.coeffs
    return trace


def run_experiment(config: ProtocolConfig) -> Trace:
    """All Monte-Carlo runs of one protocol under one config."""
    basis_rows = None
    if config.pin_basis:
        pin_seed = _derived_seed(config.seed, 0, _SCENE)
        basis_rows = generate_scene(
            config.num_nodes, config.basis_dim, config.sparsity, pin_seed
        ).basis_rows
    trace = Trace(config=config)
    for run_index in range(config.runs):
        trace.runs.append(_simulate_run(config, run_index, basis_rows))
    return trace


def run_downlink_trials(config: ProtocolConfig) -> Trace:
    """Pure request experiments: every trial, all K nodes listen.

    Each trial draws a fresh channel, requests a uniform N-subset, and logs
    the detection outcome. No readings are collected and no recovery runs,
    so sq_error is reported as 0; the capacity gate is still evaluated.
    """
    trace = Trace(config=config)
    all_nodes = np.arange(config.num_nodes)
    link = config.link()
    for trial in range(config.runs):
        signatures = None
        if config.mode == "waveform":
            signatures = generate_signatures(
                config.sig_len,
                config.num_nodes,
                _derived_seed(config.seed, trial, _SIGNATURES),
            )
        draw = draw_gains(config.num_nodes, _stream(config.seed, trial, _CHANNEL, 1))
        requested = select_random(
            all_nodes, config.request_size, _stream(config.seed, trial, _SELECT, 1)
        )
        outcome = simulate_request(
            requested,
            all_nodes,
            signatures,
            draw,
            link,
            mode=config.mode,
            rng=_stream(config.seed, trial, _NOISE, 1),
            threshold_policy=config.threshold_policy,
            map_tau=float(np.log((config.num_nodes - config.request_size) / config.request_size))
            if config.threshold_policy == "map"
            else None,
        )
        gate_ok = outcome.realized.size <= config.sig_len - 1
        run = RunTrace(run_index=trial, scene_seed=-1)
        run.records.append(
            RoundRecord(
                round_index=1,
                requested=len(requested),
                realized=int(outcome.realized.size),
                md=int(outcome.md_events.size),
                fa=int(outcome.fa_events.size),
                cra_success=gate_ok,
                acquired_total=int(outcome.realized.size) if gate_ok else 0,
                sq_error=0.0,
            )
        )
        run.appended.append(sorted(int(k) for k in outcome.realized) if gate_ok else [])
        trace.runs.append(run)
    return trace
