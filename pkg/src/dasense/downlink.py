"""Fading, power control, and the compressive transmission request.

The access point broadcasts one length-L probe that superimposes the
signature sequences of the N requested nodes. Every listening node k
correlates the received block with its own signature and declares itself
requested when the real part of the correlation clears a threshold scaled to
its own channel gain g_k (known at the node through power control). Nodes
whose gain falls below the power-control feasibility floor omega cannot
transmit regardless of the decision. Declaration errors are the false alarms
(not requested, transmits anyway) and missed detections (requested, stays
silent) that make the uplink round compressive rather than scheduled.

Two simulation modes produce the per-node decision statistic z_k:

* ``waveform``  builds the actual probe, per-node noise block, and
  correlator output;
* ``gaussian``  samples z_k from its conditional distribution given g_k,
  which is N(0, g sigma_w0^2 / 2) for idle nodes and
  N(sqrt(P_ap) g, g sigma_w1^2 / 2) for requested ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import SignatureBook

__all__ = [
    "LinkParams",
    "ChannelDraw",
    "DownlinkOutcome",
    "draw_gains",
    "compute_sinr",
    "simulate_request",
]


@dataclass(frozen=True)
class LinkParams:
    """Radio constants shared by every round.

    sig_len          L, probe / signature length in symbols.
    request_size     N, nodes addressed per request.
    omega            power-control feasibility floor on the channel gain.
    ap_snr           A^2 / N0, access-point transmit SNR (linear).
    scaled_decision  gamma_u = u * gamma, threshold offset, in (-1, 1).
    noise_floor      N0 (linear), defaults to 1.
    """

    sig_len: int
    request_size: int
    omega: float
    ap_snr: float
    scaled_decision: float
    noise_floor: float = 1.0

    def __post_init__(self) -> None:
        if self.sig_len < 1 or self.request_size < 1:
            raise ValueError("sig_len and request_size must be >= 1")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.ap_snr <= 0 or self.noise_floor <= 0:
            raise ValueError("ap_snr and noise_floor must be > 0")
        if not -1.0 < self.scaled_decision < 1.0:
            raise ValueError(
                f"scaled_decision must lie in (-1, 1), got {self.scaled_decision}"
            )

    @property
    def per_node_power(self) -> float:
        """P_ap: probe power split across the N addressed signatures."""
        return self.ap_snr * self.noise_floor / self.request_size

    @property
    def idle_var(self) -> float:
        """sigma_w0^2: correlator noise power at a node that was not addressed."""
        return self.per_node_power * self.request_size / self.sig_len + self.noise_floor

    @property
    def busy_var(self) -> float:
        """sigma_w1^2: the same at an addressed node (own signature excluded)."""
        return self.per_node_power * (self.request_size - 1) / self.sig_len + self.noise_floor

    @property
    def amplitude(self) -> float:
        """A, probe amplitude before the per-signature split."""
        return float(np.sqrt(self.ap_snr * self.noise_floor))


def compute_sinr(params: LinkParams) -> float:
    """gamma = P_ap / sigma_w0^2, the detection SINR at an idle node."""
    return params.per_node_power / params.idle_var


@dataclass(frozen=True)
class ChannelDraw:
    """One block-fading realization: Rayleigh gains and i.i.d. phases."""

    gains: np.ndarray
    phases: np.ndarray

    def __post_init__(self) -> None:
        self.gains.setflags(write=False)
        self.phases.setflags(write=False)


def draw_gains(num_nodes: int, rng: np.random.Generator) -> ChannelDraw:
    """Unit-mean exponential gains (Rayleigh power) with uniform phases."""
    gains = rng.exponential(1.0, size=num_nodes)
    phases = np.exp(2j * np.pi * rng.uniform(size=num_nodes))
    return ChannelDraw(gains=gains, phases=phases)


@dataclass(frozen=True)
class DownlinkOutcome:
    """Result of one request round over the listening nodes.

    realized = declared AND feasible; md_events = requested minus realized;
    fa_events = realized minus requested. statistic[i] is z for listeners[i].
    """

    requested: np.ndarray
    listeners: np.ndarray
    realized: np.ndarray
    md_events: np.ndarray
    fa_events: np.ndarray
    statistic: np.ndarray


def simulate_request(
    requested,
    listeners,
    signatures: SignatureBook | None,
    draw: ChannelDraw,
    params: LinkParams,
    mode: str = "gaussian",
    rng: np.random.Generator | None = None,
    threshold_policy: str = "scaled",
    map_tau: float | None = None,
) -> DownlinkOutcome:
    """One compressive transmission request over the listening nodes.

    ``requested`` must be a subset of ``listeners`` (nodes that already
    transmitted have left the pool and ignore the probe). The default
    threshold is (sqrt(P_ap) g / 2)(1 + scaled_decision); policy ``map``
    instead uses sqrt(P_ap) g / 2 + sigma_w0^2 * map_tau / (2 sqrt(P_ap)),
    the prior-odds form, and requires ``map_tau``.
    """
    listen = np.asarray(sorted(int(k) for k in listeners), dtype=np.int64)
    req = np.asarray(sorted(int(k) for k in requested), dtype=np.int64)
    if np.unique(listen).size != listen.size:
        raise ValueError("listeners must be distinct")
    if req.size and not np.isin(req, listen).all():
        raise ValueError("requested nodes must all still be listening")
    if rng is None:
        raise ValueError("simulate_request needs an rng")

    gains = draw.gains[listen]
    req_mask = np.isin(listen, req)
    p_ap = params.per_node_power
    root_p = np.sqrt(p_ap)

    if mode == "waveform":
        if signatures is None:
            raise ValueError("waveform mode needs a signature book")
        codes = signatures.sequences
        probe = codes[:, req].sum(axis=1) if req.size else np.zeros(signatures.length, dtype=complex)
        pnorm = float(np.linalg.norm(probe))
        amp = params.amplitude / pnorm if pnorm > 0 else 0.0
        h = np.sqrt(gains) * draw.phases[listen]
        scale = np.sqrt(params.noise_floor / 2.0)
        noise = scale * (
            rng.standard_normal((listen.size, signatures.length))
            + 1j * rng.standard_normal((listen.size, signatures.length))
        )
        own = codes[:, listen]
        cross = own.conj().T @ probe
        corr_noise = np.einsum("lk,kl->k", own.conj(), noise)
        statistic = gains * amp * cross.real + (h.conj() * corr_noise).real
    elif mode == "gaussian":
        mean = np.where(req_mask, root_p * gains, 0.0)
        var = gains * np.where(req_mask, params.busy_var, params.idle_var) / 2.0
        statistic = rng.normal(loc=mean, scale=np.sqrt(var))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if threshold_policy == "scaled":
        threshold = 0.5 * root_p * gains * (1.0 + params.scaled_decision)
    elif threshold_policy == "map":
        if map_tau is None:
            raise ValueError("threshold_policy='map' needs map_tau")
        threshold = 0.5 * root_p * gains + params.idle_var * map_tau / (2.0 * root_p)
    else:
        raise ValueError(f"unknown threshold_policy {threshold_policy!r}")

    declared = statistic >= threshold
    feasible = gains >= params.omega
    active = declared & feasible

    return DownlinkOutcome(
        requested=req,
        listeners=listen,
        realized=listen[active],
        md_events=listen[req_mask & ~active],
        fa_events=listen[~req_mask & active],
        statistic=statistic,
    )
