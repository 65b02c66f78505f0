"""The consensus protocol engine.

State update per step: x(t+1) = (I - a(t) L(t)) x(t) + a(t) w_hat(t),
where w_hat(t) stacks the weighted sums of the per-edge noises received
by each node.  The module provides gain-schedule designs with certified
constants, edge-noise models, seeded single runs, vectorized Monte Carlo
over replicas, and an exact second-moment recursion used as an oracle
for the Monte Carlo path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .graph import WeightedDigraph, _cached_laplacian
from .rng import (
    TAG_EDGE_NOISE,
    TAG_INNOVATION,
    TAG_REPLICA,
    StreamPool,
    philox_key,
)
from .topology import AdversarialProcess, TopologyProcess

GAIN_KINDS = ("constant", "power", "log_corrected", "table")
NOISE_KINDS = ("zero", "iid_gaussian", "iid_uniform", "m_dependent_ma", "martingale_difference")


# ---------------------------------------------------------------------------
# Gain schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GainSchedule:
    """Open-loop gain sequence a(t), t >= 1.

    kinds:
      constant      a(t) = alpha
      power         a(t) = alpha / ((t + shift)^exponent + t_star)
      log_corrected a(t) = alpha / ((sqrt(t) + t_star) log(t + t_star))
      table         explicit values, 1-indexed
    """

    kind: str
    alpha: float = 1.0
    t_star: float = 0.0
    exponent: float = 1.0
    shift: float = 0.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in GAIN_KINDS:
            raise ValueError(f"unknown gain kind {self.kind!r}")
        if self.alpha < 0 or self.t_star < 0:
            raise ValueError("alpha and t_star must be nonnegative")
        if self.kind == "power" and not (0 < self.exponent <= 1):
            raise ValueError("power exponent must lie in (0, 1]")
        if self.kind == "table":
            if self.table is None:
                raise ValueError("table kind requires explicit values")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 1 or np.any(tab < 0):
                raise ValueError("table must be a 1-d array of nonnegative gains")
            tab.flags.writeable = False
            object.__setattr__(self, "table", tab)

    def value(self, t: int) -> float:
        return float(self.values(np.asarray([t]))[0])

    def values(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized a(t) for integer times t >= 1."""
        ts = np.asarray(ts)
        if np.any(ts < 1):
            raise ValueError("gains are defined for t >= 1")
        if self.kind == "constant":
            return np.full(ts.shape, self.alpha, dtype=float)
        if self.kind == "power":
            return self.alpha / ((ts + self.shift) ** self.exponent + self.t_star)
        if self.kind == "log_corrected":
            arg = ts + self.t_star
            if np.any(arg <= 1):
                raise ValueError("log_corrected gain needs t + t_star > 1")
            return self.alpha / ((np.sqrt(ts) + self.t_star) * np.log(arg))
        if np.any(ts > len(self.table)):
            raise ValueError("time outside the gain table")
        return self.table[np.asarray(ts, dtype=np.int64) - 1]


def gain_value(schedule: GainSchedule, t: int) -> float:
    """a(t) for a single integer time t >= 1."""
    return schedule.value(t)


def design_gain_schedule(n: int, c: float, a_max: float, delta: float) -> GainSchedule:
    """Gain constants guaranteeing mean-square consensus at exponent delta.

    For delta < 1/2 returns the power schedule a(t) = alpha/(t^{1-delta} + t*)
    with alpha = 32 n (n-1)^4 c / (2n-3)^2 and t* = floor(2 alpha (n-1) a_max);
    for delta = 1/2 the log-corrected schedule with alpha doubled.  These
    constants keep a(t) <= 1/(2 d_max) from t = 1 on.  delta > 1/2 is
    rejected: no open-loop gain works there.
    """
    if n < 2 or c < 1 or a_max < 1:
        raise ValueError("need n >= 2, c >= 1, a_max >= 1")
    if delta < 0 or delta > 0.5 + 1e-12:
        raise ValueError("no consensus guarantee exists for delta > 1/2")
    base = 32 * n * (n - 1) ** 4 * c / (2 * n - 3) ** 2
    if abs(delta - 0.5) <= 1e-12:
        alpha = 2 * base
        t_star = math.floor(2 * alpha * (n - 1) * a_max)
        return GainSchedule("log_corrected", alpha=alpha, t_star=t_star)
    alpha = base
    t_star = math.floor(2 * alpha * (n - 1) * a_max)
    return GainSchedule("power", alpha=alpha, t_star=t_star, exponent=1 - delta)


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Edge-noise generator with per-edge variance exactly v.

    Noise exists for every ordered node pair at every time; the protocol
    only reads the values on present edges.  Cross-edge noises at a fixed
    time are independent in every kind.  The moving-average kind carries
    dependence over at most `m` steps; the martingale-difference kind is
    uncorrelated but not independent across time.
    """

    kind: str
    v: float = 0.0
    theta: np.ndarray | None = None  # MA weights, scaled so Var = v

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind != "zero" and self.v <= 0:
            raise ValueError("noise variance bound v must be positive")
        if self.kind == "m_dependent_ma":
            th = np.asarray(self.theta, dtype=float)
            if th.ndim != 1 or th.size < 1 or not np.any(th):
                raise ValueError("MA kind needs a nonzero weight vector")
            th = th * math.sqrt(self.v / float(np.dot(th, th)))
            th.flags.writeable = False
            object.__setattr__(self, "theta", th)

    @property
    def memory(self) -> int:
        """Longest lag with nonzero dependence."""
        if self.kind == "m_dependent_ma":
            return len(self.theta) - 1
        if self.kind == "martingale_difference":
            return 1
        return 0

    @property
    def independent_across_time(self) -> bool:
        return self.kind in ("zero", "iid_gaussian", "iid_uniform")


def make_noise(kind: str, v: float = 0.0, theta: Sequence[float] | None = None,
               half_width: float | None = None, std: float | None = None,
               m: int | None = None) -> NoiseModel:
    """Construct a noise model; convenience params pin v where natural.

    iid_uniform accepts half_width (v = half_width^2 / 3); iid_gaussian
    accepts std (v = std^2); m_dependent_ma accepts either explicit
    weights theta or a lag count m (flat weights), rescaled so the
    marginal variance is exactly v.
    """
    if kind == "zero":
        return NoiseModel("zero", 0.0)
    if kind == "iid_uniform" and half_width is not None:
        v = half_width**2 / 3.0
    if kind == "iid_gaussian" and std is not None:
        v = std**2
    if kind == "m_dependent_ma":
        if theta is None:
            if m is None:
                raise ValueError("MA kind needs theta or m")
            theta = np.ones(m + 1)
        return NoiseModel(kind, v, np.asarray(theta, dtype=float))
    if kind in ("iid_gaussian", "iid_uniform", "martingale_difference"):
        return NoiseModel(kind, v)
    raise ValueError(f"unknown noise kind {kind!r}")


class EdgeNoiseSampler:
    """Deterministic noise access for one (seed, replica) pair.

    The full (n, n) matrix of ordered-pair noises at time t is addressed
    by the counter path (tag, replica, t); batched variants append the
    replica axis to the same draw so Monte Carlo columns stay independent.
    """

    def __init__(self, model: NoiseModel, n: int, seed_or_key, replica: int = 0):
        self.model = model
        self.n = n
        self.replica = replica
        self.pool = StreamPool(seed_or_key)
        self._innov_cache: dict[tuple[int, int], np.ndarray] = {}

    # -- raw draws ---------------------------------------------------------
    def _iid_matrix(self, t: int, extra: tuple[int, ...]) -> np.ndarray:
        gen = self.pool.at(TAG_EDGE_NOISE, self.replica, t)
        shape = (self.n, self.n) + extra
        if self.model.kind == "iid_gaussian":
            return gen.standard_normal(shape) * math.sqrt(self.model.v)
        h = math.sqrt(3.0 * self.model.v)
        return gen.uniform(-h, h, shape)

    def _innovation(self, s: int, extra: tuple[int, ...]) -> np.ndarray:
        key = (s, int(bool(extra)))
        hit = self._innov_cache.get(key)
        if hit is not None and hit.shape == (self.n, self.n) + extra:
            return hit
        gen = self.pool.at(TAG_INNOVATION, self.replica, s)
        arr = gen.standard_normal((self.n, self.n) + extra)
        self._innov_cache[key] = arr
        if len(self._innov_cache) > 4 * (self.model.memory + 2):
            self._innov_cache.pop(next(iter(self._innov_cache)))
        return arr

    def edge_matrix(self, t: int, extra: tuple[int, ...] = ()) -> np.ndarray:
        """w_{ji}(t) for all ordered pairs; entry [i, j] rides edge (j, i)."""
        m = self.model
        if m.kind == "zero":
            return np.zeros((self.n, self.n) + extra)
        if m.kind in ("iid_gaussian", "iid_uniform"):
            return self._iid_matrix(t, extra)
        if m.kind == "m_dependent_ma":
            acc = np.zeros((self.n, self.n) + extra)
            for k, th in enumerate(m.theta):
                s = t - k
                if s >= 1 - len(m.theta):  # innovations exist for all s
                    acc += th * self._innovation(s, extra)
            return acc
        # martingale difference: w(t) = sqrt(v) eps(t) sign(eps(t-1))
        eps = self._innovation(t, extra)
        prev = self._innovation(t - 1, extra)
        return math.sqrt(m.v) * eps * np.sign(prev)

    # -- aggregates --------------------------------------------------------
    def aggregate(self, g: WeightedDigraph, t: int) -> np.ndarray:
        """w_hat(t): per-receiver weighted noise sums for the present edges."""
        if self.model.kind == "zero":
            return np.zeros(self.n)
        W = self.edge_matrix(t)
        return (g.weights * W).sum(axis=1)

    def aggregate_batch(self, g: WeightedDigraph, t: int, replicas: int) -> np.ndarray:
        """(n, replicas) aggregate noise; replicas ride the trailing axis."""
        if self.model.kind == "zero":
            return np.zeros((self.n, replicas))
        W = self.edge_matrix(t, (replicas,))
        return np.einsum("ij,ijr->ir", g.weights, W)


def aggregate_noise(g: WeightedDigraph, model: NoiseModel, t: int,
                    stream: EdgeNoiseSampler | int) -> np.ndarray:
    """w_hat(t) for graph g; `stream` is a sampler or a root seed."""
    sampler = stream if isinstance(stream, EdgeNoiseSampler) else EdgeNoiseSampler(model, g.n, stream)
    if sampler.model is not model and sampler.model != model:
        raise ValueError("sampler was built for a different noise model")
    return sampler.aggregate(g, t)


def aggregate_noise_covariance(g: WeightedDigraph, model: NoiseModel) -> np.ndarray:
    """Cov(w_hat(t)) = v diag(sum_j a_ij^2) for cross-edge independent noise."""
    return model.v * np.diag((g.weights**2).sum(axis=1))


# ---------------------------------------------------------------------------
# Protocol engine
# ---------------------------------------------------------------------------

def step(x: np.ndarray, g: WeightedDigraph, a: float, w_hat: np.ndarray) -> np.ndarray:
    """(I - a L(g)) x + a w_hat."""
    if a < 0:
        raise ValueError("gain must be nonnegative")
    return x - a * (_cached_laplacian(g) @ x) + a * w_hat


@dataclass
class SimulationTrace:
    """States, disagreement, and gains of one protocol run.

    `ts[k]` indexes states[k]; gains_used[k] is the gain the protocol
    would apply at ts[k].  The consensus value is the state average at
    the final time.
    """

    ts: np.ndarray
    states: np.ndarray
    disagreement: np.ndarray
    gains_used: np.ndarray
    realized_graphs: list[WeightedDigraph] | None
    initial_average: float
    consensus_value: float


def _disagreement_vec(X: np.ndarray) -> np.ndarray:
    """Column-wise V for an (n, R) state block (centered sum of squares)."""
    C = X - X.mean(axis=0, keepdims=True)
    return np.einsum("ir,ir->r", C, C)


def run(process: TopologyProcess, gains: GainSchedule, noise: NoiseModel,
        x1: Sequence[float], horizon: int, seed: int,
        record_graphs: bool = False) -> SimulationTrace:
    """Iterate the protocol from t = 1 to horizon with derived noise streams."""
    x = np.asarray(x1, dtype=float).copy()
    n = x.size
    if process.n != n:
        raise ValueError("process and initial state disagree on n")
    sampler = EdgeNoiseSampler(noise, n, seed)
    ts = np.arange(1, horizon + 2)
    a_all = gains.values(ts)
    states = np.empty((horizon + 1, n))
    V = np.empty(horizon + 1)
    graphs: list[WeightedDigraph] | None = [] if record_graphs else None
    states[0] = x
    V[0] = float(_disagreement_vec(x[:, None])[0])
    for t in range(1, horizon + 1):
        g = process.graph_at(t)
        L = _cached_laplacian(g)
        a = a_all[t - 1]
        w_hat = sampler.aggregate(g, t)
        x = x - a * (L @ x) + a * w_hat
        states[t] = x
        V[t] = float(_disagreement_vec(x[:, None])[0])
        if graphs is not None:
            graphs.append(g)
    return SimulationTrace(ts, states, V, a_all, graphs,
                           float(np.mean(np.asarray(x1, dtype=float))),
                           float(x.mean()))


@dataclass
class MonteCarloResult:
    """Per-time mean and standard error of V plus the final state block."""

    ts: np.ndarray
    mean_V: np.ndarray
    stderr_V: np.ndarray
    final_states: np.ndarray  # (replicas, n)
    replicas: int


def monte_carlo_V(process: TopologyProcess, gains: GainSchedule, noise: NoiseModel,
                  x1: Sequence[float], horizon: int, replicas: int,
                  seed: int) -> MonteCarloResult:
    """Replica mean and standard error of V(x(t)).

    Deterministic processes share their topology across replicas and are
    advanced as one (n, replicas) block; random processes fall back to a
    per-replica loop with independently derived process seeds and noise
    streams.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    x1 = np.asarray(x1, dtype=float)
    n = x1.size
    ts = np.arange(1, horizon + 2)
    if process.deterministic:
        sampler = EdgeNoiseSampler(noise, n, seed)
        a_all = gains.values(ts)
        X = np.tile(x1[:, None], (1, replicas))
        meanV = np.empty(horizon + 1)
        seV = np.empty(horizon + 1)
        v = _disagreement_vec(X)
        meanV[0], seV[0] = v.mean(), v.std(ddof=1) / math.sqrt(replicas)
        for t in range(1, horizon + 1):
            g = process.graph_at(t)
            L = _cached_laplacian(g)
            a = a_all[t - 1]
            X = X - a * (L @ X) + a * sampler.aggregate_batch(g, t, replicas)
            v = _disagreement_vec(X)
            meanV[t] = v.mean()
            seV[t] = v.std(ddof=1) / math.sqrt(replicas)
        return MonteCarloResult(ts, meanV, seV, X.T.copy(), replicas)

    key = philox_key(seed)
    V_all = np.empty((replicas, horizon + 1))
    finals = np.empty((replicas, n))
    for r in range(replicas):
        sub = np.random.SeedSequence(entropy=seed, spawn_key=(TAG_REPLICA, r))
        proc_seed, noise_seed = (int(s) for s in sub.generate_state(2, np.uint64))
        proc_r = process.reseeded(proc_seed)
        trace = run(proc_r, gains, noise, x1, horizon, noise_seed)
        V_all[r] = trace.disagreement
        finals[r] = trace.states[-1]
    meanV = V_all.mean(axis=0)
    seV = V_all.std(axis=0, ddof=1) / math.sqrt(replicas)
    return MonteCarloResult(ts, meanV, seV, finals, replicas)


def transition_product(process: TopologyProcess, gains: GainSchedule,
                       i: int, t: int) -> np.ndarray:
    """Ordered product (I - a(t)L(t)) ... (I - a(i)L(i)); identity if t < i."""
    n = process.n
    out = np.eye(n)
    for l in range(i, t + 1):
        A = np.eye(n) - gains.value(l) * _cached_laplacian(process.graph_at(l))
        out = A @ out
    return out


# ---------------------------------------------------------------------------
# Exact second moments
# ---------------------------------------------------------------------------

def exact_second_moment(process: TopologyProcess, gains: GainSchedule,
                        noise_cov, x1: Sequence[float],
                        horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """E V(x(t)) for deterministic topologies and time-independent noise.

    With J the centering projector and A_t = I - a(t) L(t), the centered
    second moment M obeys M(t+1) = J A_t M(t) A_t' J + a(t)^2 J C_w(t) J
    and E V(x(t)) = tr M(t).  `noise_cov` may be a NoiseModel (must be an
    independent-across-time kind), a constant (n, n) matrix, or a
    callable t -> (n, n).
    """
    if not process.deterministic:
        raise ValueError("exact second moments need a deterministic topology process")
    x1 = np.asarray(x1, dtype=float)
    n = x1.size
    if isinstance(noise_cov, NoiseModel):
        if not noise_cov.independent_across_time:
            raise ValueError("exact recursion requires noise independent across time")
        model = noise_cov
        cov_at = lambda t, g: aggregate_noise_covariance(g, model)
    elif callable(noise_cov):
        cov_at = lambda t, g: np.asarray(noise_cov(t), dtype=float)
    else:
        C = np.asarray(noise_cov, dtype=float)
        cov_at = lambda t, g: C
    J = np.eye(n) - np.ones((n, n)) / n
    y = J @ x1
    M = np.outer(y, y)
    ts = np.arange(1, horizon + 2)
    EV = np.empty(horizon + 1)
    EV[0] = float(np.trace(M))
    a_all = gains.values(np.arange(1, horizon + 1))
    for t in range(1, horizon + 1):
        g = process.graph_at(t)
        L = _cached_laplacian(g)
        a = a_all[t - 1]
        A = np.eye(n) - a * L
        M = A @ M @ A.T
        M = J @ M @ J
        C = cov_at(t, g)
        M += a * a * (J @ C @ J)
        EV[t] = float(np.trace(M))
    return ts, EV


def adversarial_exact_moments(process: AdversarialProcess, gains: GainSchedule,
                              v: float, x1: Sequence[float], horizon: int,
                              record_ts: Sequence[int] | None = None
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Fast exact E V for the two-graph adversarial construction.

    Both emitted Laplacians share the orthonormal eigenbasis of the
    complete/pair graphs, so the centered second moment stays diagonal in
    that basis and each mode follows a scalar recursion: multiplier
    (1 - 2a) on pair steps, (1 - n a) on the complete slot, plus injected
    variance a^2 q per step.  Windows are closed with division-free
    suffix products, which keeps horizons of 10^7 steps cheap and avoids
    underflow on long windows.  Requires i.i.d. noise with per-edge
    variance v; matches `exact_second_moment` to machine precision.

    record_ts restricts the output to the given (sorted) times in
    [1, horizon + 1]; by default every time is recorded.
    """
    from .graph import complete_graph, complete_pair_eigenbasis, pair_graph

    n = process.n
    x1 = np.asarray(x1, dtype=float)
    if x1.size != n:
        raise ValueError("x1 has wrong length")
    if record_ts is None:
        record_ts = np.arange(1, horizon + 2)
    rec = np.asarray(record_ts, dtype=np.int64)
    if rec.size and (rec[0] < 1 or rec[-1] > horizon + 1 or np.any(np.diff(rec) <= 0)):
        raise ValueError("record_ts must be sorted within [1, horizon + 1]")
    P, _ = complete_pair_eigenbasis(n)
    J = np.eye(n) - np.ones((n, n)) / n
    C_pair = aggregate_noise_covariance(pair_graph(n), NoiseModel("iid_gaussian", v))
    C_comp = aggregate_noise_covariance(complete_graph(n), NoiseModel("iid_gaussian", v))
    q_pair = np.diag(P.T @ J @ C_pair @ J @ P).copy()
    q_comp = np.diag(P.T @ J @ C_comp @ J @ P).copy()
    y = P.T @ (J @ x1)
    m = y * y  # per-mode second moments; mode 0 (the average) stays 0
    m[0] = 0.0
    EV = np.empty(rec.size)
    ptr = 0
    while ptr < rec.size and rec[ptr] == 1:
        EV[ptr] = m.sum()
        ptr += 1

    def _mode2_prefix(m2_0: float, sq: np.ndarray, b: np.ndarray) -> float:
        # value after the last step of the slice, without dividing by
        # prefix products (suffix underflow just zeroes dead contributions)
        suff = np.empty(sq.size + 1)
        suff[-1] = 1.0
        suff[:-1] = np.cumprod(sq[::-1])[::-1]
        return m2_0 * suff[0] + float(np.dot(b, suff[1:]))

    times = process.times
    g1 = process.g1_times
    for k in range(len(times) - 1):
        s, e = int(times[k]), int(times[k + 1])
        if s > horizon or ptr >= rec.size:
            break
        steps = min(e - 1, horizon) - s + 1  # executed steps in this window
        if steps <= 0:
            break
        ts_win = np.arange(s, s + steps)
        a = gains.values(ts_win)
        gpos = int(g1[k]) - s
        has_g = 0 <= gpos < steps
        lam = 1.0 - 2.0 * a
        q2 = np.full(steps, q_pair[1])
        if has_g:
            lam[gpos] = 1.0 - n * a[gpos]
            q2[gpos] = q_comp[1]
        sq = lam * lam
        b2 = a * a * q2
        inj_cum = np.cumsum(a * a)

        def _hi_at(j: int) -> np.ndarray:
            # modes >= 3 after step index j (0-based within the window)
            if n <= 2:
                return np.zeros(0)
            if not has_g or j < gpos:
                return m[2:] + q_pair[2:] * inj_cum[j]
            ag = a[gpos]
            before = inj_cum[gpos] - ag * ag
            out = (m[2:] + q_pair[2:] * before) * (1.0 - n * ag) ** 2 + ag * ag * q_comp[2:]
            return out + q_pair[2:] * (inj_cum[j] - inj_cum[gpos])

        while ptr < rec.size and rec[ptr] <= s + steps:
            j = int(rec[ptr]) - s - 1  # state at rec = after step rec-1
            m2_j = _mode2_prefix(m[1], sq[: j + 1], b2[: j + 1])
            EV[ptr] = m2_j + _hi_at(j).sum()
            ptr += 1
        m2_end = _mode2_prefix(m[1], sq, b2)
        if n > 2:
            m[2:] = _hi_at(steps - 1)
        m[1] = m2_end
    return rec, EV


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_trace_csv(trace: SimulationTrace, path) -> None:
    """Columns t, x_1..x_n, V, a."""
    n = trace.states.shape[1]
    header = "t," + ",".join(f"x_{i + 1}" for i in range(n)) + ",V,a"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for k, t in enumerate(trace.ts):
            xs = ",".join(f"{x:.12g}" for x in trace.states[k])
            fh.write(f"{int(t)},{xs},{trace.disagreement[k]:.12g},{trace.gains_used[k]:.12g}\n")


def write_monte_carlo_csv(result: MonteCarloResult, path) -> None:
    """Columns t, meanV, stderrV, replicas."""
    with open(path, "w") as fh:
        fh.write("t,meanV,stderrV,replicas\n")
        for k, t in enumerate(result.ts):
            fh.write(f"{int(t)},{result.mean_V[k]:.12g},{result.stderr_V[k]:.12g},{result.replicas}\n")
