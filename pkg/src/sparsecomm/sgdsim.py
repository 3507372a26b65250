"""Distributed SGD simulator with sparsified updates and error compensation.

Each round, every node computes a minibatch gradient on its shard, adds its
carry-over memory, sparsifies the result, and ships the sparse update; the
un-shipped remainder becomes next round's memory.  The aggregator averages
the updates (optionally rescaling by r/k in the memory-free unbiased mode)
and takes a gradient step shared by all nodes.

The simulator is bitwise deterministic for a fixed seed: data draws and
selection randomness live on separate per-node streams, nodes are reduced
in a fixed order, and with k = r = d the trajectory coincides exactly with
plain minibatch SGD on the same draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .seeding import substream
from .sparsify import SparsifierSpec

ERROR_FEEDBACK_MEAN = "error_feedback_mean"
UNBIASED_RESCALE = "unbiased_rescale"

_AGGREGATIONS = (ERROR_FEEDBACK_MEAN, UNBIASED_RESCALE)

# Learning-rate schedules are either a constant or a piecewise-constant
# list of (start_step, rate) breakpoints sorted by step.
Schedule = Union[float, Sequence[tuple[int, float]]]


class NonFiniteState(RuntimeError):
    """Weights or gradients left the finite range; the run is aborted."""


@dataclass
class NodeState:
    """One simulated node: its shard, carry-over memory, and rng streams."""

    node_id: int
    indices: np.ndarray
    memory: np.ndarray
    data_rng: np.random.Generator
    selection_rng: np.random.Generator


@dataclass(frozen=True)
class TrainConfig:
    """Simulator parameters.

    ``r`` defaults to ``min(n * k, d)`` at resolution time, the choice that
    gives each coordinate of a commonly-important set an expected single
    update per round across n nodes (selection probability k/r = 1/n).
    """

    n: int
    k: int
    steps: int
    batch_size: int = 8
    r: Optional[int] = None
    eta: Schedule = 0.1
    aggregation: str = ERROR_FEEDBACK_MEAN
    seed: int = 0
    sparsifier: Optional[SparsifierSpec] = None
    partition: str = "contiguous"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.aggregation not in _AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.partition not in ("contiguous", "interleaved"):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.n < 1 or self.k < 1 or self.steps < 1 or self.batch_size < 1:
            raise ValueError("n, k, steps and batch_size must be positive")

    def resolve_r(self, d: int) -> int:
        r = min(self.n * self.k, d) if self.r is None else self.r
        if not self.k <= r <= d:
            raise ValueError(f"need k={self.k} <= r={r} <= d={d}")
        return r

    def resolve_sparsifier(self, d: int) -> SparsifierSpec:
        if self.sparsifier is not None:
            return self.sparsifier
        return SparsifierSpec.rtop(self.resolve_r(d), self.k)


def learning_rate(eta: Schedule, t: int) -> float:
    """Rate in effect at step t for a constant or piecewise schedule."""
    if isinstance(eta, (int, float)):
        rate = float(eta)
    else:
        rate = None
        for start, value in eta:
            if t >= start:
                rate = float(value)
        if rate is None:
            raise ValueError(f"schedule has no rate for step {t}")
    if rate <= 0:
        raise ValueError("learning rate must be positive")
    return rate


def sqrt_horizon_schedule(chat: float, steps: int) -> float:
    """The fixed-horizon preset eta = chat / sqrt(T)."""
    return chat / math.sqrt(steps)


def make_nodes(obj, cfg: TrainConfig) -> list[NodeState]:
    """Equal shards (contiguous or interleaved) plus per-node streams."""
    if obj.n_samples < cfg.n:
        raise ValueError("need at least one sample per node")
    all_idx = np.arange(obj.n_samples)
    nodes = []
    for i in range(cfg.n):
        if cfg.partition == "contiguous":
            lo = i * obj.n_samples // cfg.n
            hi = (i + 1) * obj.n_samples // cfg.n
            shard = all_idx[lo:hi]
        else:
            shard = all_idx[i :: cfg.n]
        nodes.append(
            NodeState(
                node_id=i,
                indices=shard,
                memory=np.zeros(obj.d),
                data_rng=substream(cfg.seed, 1, i),
                selection_rng=substream(cfg.seed, 2, i),
            )
        )
    return nodes


def init_weights(obj, seed: int, scale: float = 1.0) -> np.ndarray:
    """Deterministic shared initialization (the broadcast step)."""
    return substream(seed, 0).normal(0.0, scale, obj.d)


def local_gradient(
    obj, node: NodeState, w: np.ndarray, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Mean gradient over a uniform with-replacement minibatch of the shard."""
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    if node.indices.size == 0:
        raise ValueError(f"node {node.node_id} has an empty shard")
    picks = node.indices[rng.integers(0, node.indices.size, size=batch_size)]
    return obj.grad_minibatch(w, picks)


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round record, evaluated at the post-step weights."""

    t: int
    loss: float
    grad_sq_norm: float
    memory_sq_norm: float
    comm_entries: int


def sgd_round(
    nodes: list[NodeState],
    obj,
    w: np.ndarray,
    cfg: TrainConfig,
    t: int,
    trace: Optional[dict] = None,
) -> tuple[np.ndarray, RoundMetrics]:
    """One synchronous round; node memories are updated in place.

    Error-feedback mode follows gradient-accumulation semantics: sparsify
    gradient-plus-memory, remember the remainder, plain-average the sparse
    updates.  The unbiased-rescale mode sparsifies the raw gradient and
    multiplies the average by r/k, leaving memories at zero.

    When ``trace`` is a dict it receives the per-node "gradients",
    "memories_before" and "updates" arrays of the round (for diagnostics
    and conservation checks).
    """
    spec = cfg.resolve_sparsifier(obj.d)
    use_memory = cfg.aggregation == ERROR_FEEDBACK_MEAN
    agg = np.zeros(obj.d)
    if trace is not None:
        trace["gradients"], trace["memories_before"], trace["updates"] = [], [], []
    for node in nodes:  # fixed order: deterministic reduction
        g = local_gradient(obj, node, w, cfg.batch_size, node.data_rng)
        carried = g + node.memory if use_memory else g
        update = spec.apply(carried, node.selection_rng).to_dense()
        if trace is not None:
            trace["gradients"].append(g)
            trace["memories_before"].append(node.memory.copy())
            trace["updates"].append(update)
        if use_memory:
            node.memory = carried - update
        agg += update
    agg /= len(nodes)
    if cfg.aggregation == UNBIASED_RESCALE:
        agg *= spec.unbiased_rescale(obj.d)
    w_new = w - learning_rate(cfg.eta, t) * agg
    if not np.all(np.isfinite(w_new)):
        raise NonFiniteState(
            f"non-finite weights at step {t}; max |w| was {np.max(np.abs(w)):.3e}"
        )
    metrics = RoundMetrics(
        t=t,
        loss=float(obj.loss(w_new)),
        grad_sq_norm=float(np.sum(obj.full_grad(w_new) ** 2)),
        memory_sq_norm=float(sum(np.sum(n.memory**2) for n in nodes)),
        comm_entries=len(nodes) * spec.entries_budget,
    )
    return w_new, metrics


@dataclass
class TrainResult:
    records: list[RoundMetrics]
    weights: np.ndarray

    @property
    def final(self) -> RoundMetrics:
        return self.records[-1]


def train(obj, cfg: TrainConfig) -> TrainResult:
    """Run the full simulation; bitwise deterministic for a fixed seed."""
    w = init_weights(obj, cfg.seed, cfg.init_scale)
    nodes = make_nodes(obj, cfg)
    records = []
    for t in range(cfg.steps):
        w, metrics = sgd_round(nodes, obj, w, cfg, t)
        records.append(metrics)
    return TrainResult(records=records, weights=w)


def reference_sgd(obj, cfg: TrainConfig) -> TrainResult:
    """Plain synchronous minibatch SGD on the identical sample draws.

    Used as the uncompressed baseline: with k = r = d the simulator must
    reproduce this trajectory exactly.
    """
    w = init_weights(obj, cfg.seed, cfg.init_scale)
    nodes = make_nodes(obj, cfg)
    records = []
    for t in range(cfg.steps):
        agg = np.zeros(obj.d)
        for node in nodes:
            agg += local_gradient(obj, node, w, cfg.batch_size, node.data_rng)
        agg /= len(nodes)
        w = w - learning_rate(cfg.eta, t) * agg
        records.append(
            RoundMetrics(
                t=t,
                loss=float(obj.loss(w)),
                grad_sq_norm=float(np.sum(obj.full_grad(w) ** 2)),
                memory_sq_norm=0.0,
                comm_entries=len(nodes) * obj.d,
            )
        )
    return TrainResult(records=records, weights=w)


class HypothesisViolated(ValueError):
    """The step-size constant violates chat / sqrt(T) <= 1 / (2L)."""


@dataclass(frozen=True)
class ConvergenceBoundInputs:
    """Inputs to the fixed-horizon convergence bound."""

    smoothness: float  # L
    grad_bound: float  # G, second-moment bound on per-sample gradients
    batch_size: int
    n: int
    steps: int
    k: int
    d: int
    f0_gap: float  # E[f(w_0)] - f*
    chat: float  # step constant: eta = chat / sqrt(T)

    def __post_init__(self):
        values = [
            self.smoothness,
            self.grad_bound,
            self.batch_size,
            self.n,
            self.steps,
            self.k,
            self.d,
            self.f0_gap,
            self.chat,
        ]
        if any(v <= 0 for v in values):
            raise ValueError("all bound inputs must be positive")
        if self.k > self.d:
            raise ValueError("k cannot exceed d")


def convergence_bound(inp: ConvergenceBoundInputs) -> float:
    """Fixed-horizon bound on E||grad f(z_T)||^2 for the simulator.

    First term: ``(f0_gap / chat + chat L G^2 / (B n)) * 4 / sqrt(T)``.
    Second term: ``8 (4 (1 - (k/d)^2) / (k/d)^2 + 1) chat^2 L^2 G^2 / T``;
    the bracket collapses to 1 with no compression (k = d).
    """
    if inp.chat / math.sqrt(inp.steps) > 1.0 / (2.0 * inp.smoothness):
        raise HypothesisViolated(
            f"chat/sqrt(T)={inp.chat / math.sqrt(inp.steps):g} exceeds "
            f"1/(2L)={1.0 / (2.0 * inp.smoothness):g}"
        )
    gamma_sq = (inp.k / inp.d) ** 2
    first = (
        inp.f0_gap / inp.chat
        + inp.chat * inp.smoothness * inp.grad_bound**2 / (inp.batch_size * inp.n)
    ) * 4.0 / math.sqrt(inp.steps)
    bracket = 4.0 * (1.0 - gamma_sq) / gamma_sq + 1.0
    second = 8.0 * bracket * inp.chat**2 * inp.smoothness**2 * inp.grad_bound**2 / inp.steps
    return first + second


def convergence_order_terms(
    j: float, g: float, batch_size: int, n: int, d: int, k: int, steps: int
) -> tuple[float, float]:
    """Order terms of the rate under tuned constants, for curve plotting.

    Returns ``(J G / sqrt(B n T), J^2 B n d^2 / (k^2 T))``; the first term
    is compression-free, the second carries the (d/k)^2 penalty.
    """
    if min(j, g, batch_size, n, d, k, steps) <= 0:
        raise ValueError("all inputs must be positive")
    term1 = j * g / math.sqrt(batch_size * n * steps)
    term2 = j * j * batch_size * n * d * d / (k * k * steps)
    return term1, term2


def compare_sparsifiers(
    obj,
    base_cfg: TrainConfig,
    specs: Sequence[SparsifierSpec],
    seeds: Sequence[int],
) -> list[dict]:
    """Train once per (spec, seed) at a shared entries budget.

    Returns one row per spec with mean and std of the final loss and final
    squared gradient norm across seeds.
    """
    budgets = {spec.entries_budget for spec in specs}
    if len(budgets) != 1:
        raise ValueError(f"specs disagree on the entries budget: {sorted(budgets)}")
    rows = []
    for spec in specs:
        losses, grads = [], []
        for seed in seeds:
            cfg = replace(base_cfg, sparsifier=spec, seed=int(seed))
            result = train(obj, cfg)
            losses.append(result.final.loss)
            grads.append(result.final.grad_sq_norm)
        losses = np.asarray(losses)
        grads = np.asarray(grads)
        rows.append(
            {
                "spec": spec.label,
                "k_entries": spec.entries_budget,
                "seeds": len(seeds),
                "mean_final_loss": float(losses.mean()),
                "std_final_loss": float(losses.std(ddof=1)) if len(seeds) > 1 else 0.0,
                "mean_final_grad_sq": float(grads.mean()),
                "std_final_grad_sq": float(grads.std(ddof=1)) if len(seeds) > 1 else 0.0,
                "comm_entries_per_round": base_cfg.n * spec.entries_budget,
            }
        )
    return rows
