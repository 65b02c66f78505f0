"""Mobile ad-hoc network application: agent motion, erf-based reception
probabilities from the shadowing/path-loss model, and the periodic
broadcast-acknowledge consensus protocol.

Each period [lT, (l+1)T) agent i broadcasts at lT + (i-1)T/n; a directed
reception succeeds with a probability depending on the sender's link
budget and the pairwise distance at the broadcast instant.  Agents that
received each other form the (undirected) neighbor set of the round, and
states update by

    x_i <- x_i + a_l sum_{j in N_i} (x_j + xi_j + zeta_ij - x_i)

with quantization noise xi per sender and reception noise zeta per
ordered pair.  Group velocity moves everyone identically and never
affects distances; relative speeds are held at their round-start value
within a round so positions integrate exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf

from .dynamics import GainSchedule, SimulationTrace, _disagreement_vec
from .graph import WeightedDigraph
from .rng import TAG_MANET_ROUND, StreamPool

FSPL_CONST_DB = 32.45
LINK_BUDGET_CONST_DB = 32.4  # constant used inside the per-agent offset


def fspl(d_km: float, f_mhz: float) -> float:
    """Free-space path loss in dB: 32.45 + 20 log10 d + 20 log10 f."""
    if np.any(np.asarray(d_km) <= 0) or np.any(np.asarray(f_mhz) <= 0):
        raise ValueError("distance and frequency must be positive")
    return FSPL_CONST_DB + 20 * np.log10(d_km) + 20 * np.log10(f_mhz)


def reception_probability(alpha: float, beta: float, d_km) -> np.ndarray | float:
    """Packet success probability (1 + erf(alpha - beta log10 d)) / 2.

    Strictly decreasing in d, equal to 1/2 at d = 10^(alpha/beta).
    d = 0 (co-located agents) is treated as the limit, probability 1.
    """
    d = np.asarray(d_km, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    safe = np.where(d > 0, d, 1.0)
    out = np.where(d > 0, 0.5 * (1.0 + erf(alpha - beta * np.log10(safe))), 1.0)
    return out if out.ndim else float(out)


def distance_budget(u: float, big_u: float, c2: float, beta: float,
                    alpha_min: float, l: int) -> float:
    """Maximal window diameter preserving the connectivity probability bound.

    exp(sqrt(u log l - log log l + U) / (beta sqrt(c2)) + (alpha_min - 1)/beta);
    substituting it back into the quadratic connectivity bound reproduces
    the probability floor c1 e^{-U} l^{-u} log l.
    """
    if not (0 < u < 0.5) or big_u <= 0 or c2 <= 0 or beta <= 0 or l < 2:
        raise ValueError("need u in (0, 1/2), U > 0, c2 > 0, beta > 0, l >= 2")
    radicand = u * math.log(l) - math.log(math.log(l)) + big_u
    if radicand < 0:
        raise ValueError("bound is vacuous at this l (negative radicand)")
    return math.exp(math.sqrt(radicand) / (beta * math.sqrt(c2)) + (alpha_min - 1) / beta)


@dataclass(frozen=True)
class RadioParams:
    """Per-agent reception offsets and the shared slope.

    alpha[j] = (S_j - 32.4 - 20 log10 f_j - R_th) / (sqrt(2) sigma) and
    beta = 10 sqrt(2) / sigma, with sigma the shadowing standard
    deviation in dB.
    """

    alpha: np.ndarray
    beta: float
    shadow_sigma: float = 1.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        if self.beta <= 0 or self.shadow_sigma <= 0:
            raise ValueError("beta and shadow_sigma must be positive")

    @classmethod
    def from_link_budget(cls, signal_dbm, f_mhz, r_th_dbm: float,
                         shadow_sigma: float) -> "RadioParams":
        s = np.atleast_1d(np.asarray(signal_dbm, dtype=float))
        f = np.atleast_1d(np.asarray(f_mhz, dtype=float))
        alpha = (s - LINK_BUDGET_CONST_DB - 20 * np.log10(f) - r_th_dbm) / (math.sqrt(2) * shadow_sigma)
        return cls(alpha, 10 * math.sqrt(2) / shadow_sigma, shadow_sigma)


@dataclass(frozen=True)
class ManetScene:
    """Scene geometry, motion rule, radio model, and noise levels.

    Relative speed of every agent is speed_scale / (t + speed_t0)^speed_b
    along its fixed heading; positions are in km and the broadcast period
    is `period` time units.
    """

    positions0: np.ndarray          # (n, 2) km
    headings: np.ndarray            # (n,) radians
    radio: RadioParams
    initial_states: np.ndarray      # (n,)
    speed_scale: float = 1.0
    speed_t0: float = 200.0
    speed_b: float = 1.0
    period: float = 1.0
    xi_half_width: float = 1.0 / 16.0   # quantization noise, uniform
    zeta_std: float = 0.05              # reception noise, gaussian
    group_velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        p = np.asarray(self.positions0, dtype=float)
        h = np.asarray(self.headings, dtype=float)
        x = np.asarray(self.initial_states, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or h.shape != (p.shape[0],) or x.shape != (p.shape[0],):
            raise ValueError("positions0 (n,2), headings (n,), initial_states (n,) must agree")
        for name, arr in (("positions0", p), ("headings", h), ("initial_states", x)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.positions0.shape[0]

    def relative_speed(self, t: float) -> float:
        return self.speed_scale / (t + self.speed_t0) ** self.speed_b

    def round_displacements(self, rounds: int) -> np.ndarray:
        """Cumulative along-heading displacement at each round start.

        Speeds are sampled at round starts and held for the round, so
        displacement accumulates as a plain cumulative sum; entry l is
        the displacement at time lT, entry 0 being 0.
        """
        ls = np.arange(rounds, dtype=float)
        per_round = self.relative_speed(ls * self.period) * self.period
        out = np.zeros(rounds + 1)
        out[1:] = np.cumsum(per_round)
        return out

    def positions_at(self, l: int, tau_offset: float, cum_disp: float) -> np.ndarray:
        """(n, 2) positions at time lT + tau_offset within round l."""
        s_l = self.relative_speed(l * self.period)
        disp = cum_disp + s_l * tau_offset
        u = np.stack([np.cos(self.headings), np.sin(self.headings)], axis=1)
        drift = np.asarray(self.group_velocity, dtype=float) * (l * self.period + tau_offset)
        return self.positions0 + u * disp + drift


def _alpha_vector(scene: ManetScene) -> np.ndarray:
    a = scene.radio.alpha
    return np.full(scene.n, float(a[0])) if a.size == 1 else a


def _round_probabilities(scene: ManetScene, l: int, cum_disp: float) -> np.ndarray:
    """probs[i, j]: probability that j receives i's broadcast this round."""
    n = scene.n
    alpha = _alpha_vector(scene)
    beta = scene.radio.beta
    probs = np.empty((n, n))
    for i in range(n):
        tau = (i / n) * scene.period
        pos = scene.positions_at(l, tau, cum_disp)
        d = np.linalg.norm(pos - pos[i], axis=1)
        probs[i] = reception_probability(alpha[i], beta, d)
        probs[i, i] = 0.0
    return probs


def simulate_round(scene: ManetScene, l: int, states: Sequence[float], a_l: float,
                   stream: StreamPool, cum_disp: float | None = None
                   ) -> tuple[np.ndarray, WeightedDigraph]:
    """One broadcast period: mutual receptions form the round's graph.

    Draw order per round: reception uniforms (n, n), quantization noise
    xi (n,), reception noise zeta (n, n), all from the (round) substream.
    """
    x = np.asarray(states, dtype=float)
    n = scene.n
    if cum_disp is None:
        cum_disp = float(scene.round_displacements(l + 1)[l])
    probs = _round_probabilities(scene, l, cum_disp)
    gen = stream.at(TAG_MANET_ROUND, 0, l)
    succ = gen.random((n, n)) < probs          # succ[i, j]: j receives i
    adj = succ & succ.T                        # mutual reception
    np.fill_diagonal(adj, False)
    xi = gen.uniform(-scene.xi_half_width, scene.xi_half_width, n)
    zeta = gen.normal(0.0, scene.zeta_std, (n, n))
    recv = adj.T  # recv[i, j]: i hears j
    term = recv @ (x + xi) + (recv * zeta).sum(axis=1) - recv.sum(axis=1) * x
    new = x + a_l * term
    graph = WeightedDigraph(n, recv.astype(float), 1.0)
    return new, graph


def run_manet(scene: ManetScene, gains: GainSchedule, rounds: int, seed: int,
              record_graphs: bool = False) -> SimulationTrace:
    """Iterate rounds l = 0 .. rounds-1; round l applies gain a(l+1) of the
    schedule (round indexing starts at zero, gain tables at one)."""
    stream = StreamPool(seed)
    x = scene.initial_states.copy()
    disps = scene.round_displacements(rounds)
    a_all = gains.values(np.arange(1, rounds + 2))
    states = np.empty((rounds + 1, scene.n))
    V = np.empty(rounds + 1)
    graphs: list[WeightedDigraph] | None = [] if record_graphs else None
    states[0] = x
    V[0] = float(_disagreement_vec(x[:, None])[0])
    for l in range(rounds):
        x, g = simulate_round(scene, l, x, a_all[l], stream, cum_disp=float(disps[l]))
        states[l + 1] = x
        V[l + 1] = float(_disagreement_vec(x[:, None])[0])
        if graphs is not None:
            graphs.append(g)
    return SimulationTrace(np.arange(rounds + 1), states, V, a_all, graphs,
                           float(scene.initial_states.mean()), float(x.mean()))


@dataclass
class ManetBatch:
    """Vectorized multi-run summary: final states plus the mean V series."""

    final_states: np.ndarray   # (runs, n)
    final_range: np.ndarray    # (runs,)
    final_mean: np.ndarray     # (runs,)
    mean_V: np.ndarray         # (rounds + 1,)
    runs: int


def run_manet_batch(scene: ManetScene, gains: GainSchedule, rounds: int,
                    runs: int, seed: int) -> ManetBatch:
    """Advance `runs` independent replicas together.

    All replicas share the deterministic motion, so reception
    probabilities are computed once per round; per-replica draws ride the
    leading axis of the (runs, n, n) round substream draws.
    """
    stream = StreamPool(seed)
    n = scene.n
    X = np.tile(scene.initial_states, (runs, 1))
    disps = scene.round_displacements(rounds)
    a_all = gains.values(np.arange(1, rounds + 1))
    meanV = np.empty(rounds + 1)
    meanV[0] = float(_disagreement_vec(X.T).mean())
    for l in range(rounds):
        probs = _round_probabilities(scene, l, float(disps[l]))
        gen = stream.at(TAG_MANET_ROUND, 1, l)
        succ = gen.random((runs, n, n)) < probs[None, :, :]
        adj = succ & np.swapaxes(succ, 1, 2)
        idx = np.arange(n)
        adj[:, idx, idx] = False
        xi = gen.uniform(-scene.xi_half_width, scene.xi_half_width, (runs, n))
        zeta = gen.normal(0.0, scene.zeta_std, (runs, n, n))
        recv = np.swapaxes(adj, 1, 2)
        term = (np.einsum("sij,sj->si", recv.astype(float), X + xi)
                + (recv * zeta).sum(axis=2) - recv.sum(axis=2) * X)
        X = X + a_all[l] * term
        meanV[l + 1] = float(_disagreement_vec(X.T).mean())
    return ManetBatch(X, X.max(axis=1) - X.min(axis=1), X.mean(axis=1), meanV, runs)


def scenario_preset(figure: str) -> tuple[ManetScene, GainSchedule]:
    """The three simulation scenarios: nine agents on the unit circle.

    Agent i starts at angle (i-1) pi/8 with that same heading and state
    (i-1)/8; relative speed decays like 1/(t+200)^b with b = 1, 0.9, 0.8
    for fig2, fig3, fig4.  The gain at round l is 1/(l+30)^0.99.
    """
    exponents = {"fig2": 1.0, "fig3": 0.9, "fig4": 0.8}
    if figure not in exponents:
        raise ValueError(f"unknown scenario {figure!r}; pick one of {sorted(exponents)}")
    n = 9
    theta = np.arange(n) * np.pi / 8
    scene = ManetScene(
        positions0=np.stack([np.cos(theta), np.sin(theta)], axis=1),
        headings=theta,
        radio=RadioParams(alpha=np.full(n, 4.0), beta=10 * math.sqrt(2), shadow_sigma=1.0),
        initial_states=np.arange(n) / 8.0,
        speed_scale=1.0,
        speed_t0=200.0,
        speed_b=exponents[figure],
        period=1.0,
        xi_half_width=1.0 / 16.0,
        zeta_std=0.05,
    )
    # evaluated at t = l + 1 with shift 29, i.e. exactly 1/(l+30)^0.99
    gains = GainSchedule("power", alpha=1.0, t_star=0.0, exponent=0.99, shift=29.0)
    return scene, gains


def write_positions_csv(scene: ManetScene, rounds: int, path) -> None:
    """Columns l, agent, px, py at round starts (motion is deterministic)."""
    disps = scene.round_displacements(rounds)
    with open(path, "w") as fh:
        fh.write("l,agent,px,py\n")
        for l in range(rounds + 1):
            pos = scene.positions_at(l, 0.0, float(disps[l]))
            for i in range(scene.n):
                fh.write(f"{l},{i + 1},{pos[i, 0]:.12g},{pos[i, 1]:.12g}\n")
