"""Federated protocol engine for zero-order training with transformed robust aggregation.

One global epoch of any zero-order strategy ends with a broadcast of a few
aggregated projection vectors. Clients and the federator turn these into the
new global model with :func:`apply_projected_update`; both sides regenerate
the same directions from seeds and run the same floating-point operations in
the same order, so their models agree bit for bit.
"""
from __future__ import annotations

import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model, zo
from .aggregation import AggregationRule, aggregate
from .attacks import AttackSpec, assemble, byzantine_vector, flip_labels
from .core_math import DirectionKind, perturbation_seeds, sample_directions
from .data import minibatch
from .model import Dataset


class Strategy(str, enum.Enum):
    UNBIASED = "unbiased"
    BIASED = "biased"
    UNBIASED_COMPRESSED = "unbiased_compressed"
    FEDAVG = "fedavg"


class DirectionSource:
    """Regenerates the ``(K, d)`` direction matrix of local epoch ``l`` in global epoch ``t``.

    ``override`` may return a matrix for some ``(t, l)`` (or None to fall back
    to seeded sampling); tests use it to plant a complete orthonormal basis.
    """

    def __init__(self, base_seed: int, k: int, d: int, kind: DirectionKind = DirectionKind.SPHERE,
                 override: Callable[[int, int], np.ndarray | None] | None = None):
        self.base_seed = int(base_seed)
        self.k = k
        self.d = d
        self.kind = DirectionKind(kind)
        self.override = override

    def matrix(self, t: int, l: int) -> np.ndarray:
        if self.override is not None:
            planted = self.override(t, l)
            if planted is not None:
                return np.asarray(planted, dtype=np.float64)
        return sample_directions(perturbation_seeds(self.base_seed, t, l, self.k), self.d, self.kind)


@dataclass
class CommLedger:
    """Scalars sent per client, cumulative over the run, plus one entry per global epoch."""

    uplink_scalars: int = 0
    downlink_scalars: int = 0
    per_round: list[tuple[int, int]] = field(default_factory=list)

    def record(self, uplink: int, downlink: int) -> None:
        self.uplink_scalars += uplink
        self.downlink_scalars += downlink
        self.per_round.append((uplink, downlink))


@dataclass(frozen=True)
class Broadcast:
    """Federator-to-client message of global epoch ``t``.

    Zero-order strategies send ``(l, rho_hat)`` blocks, where ``l`` names the
    direction set; FedAvg sends the dense aggregated gradient.
    """

    t: int
    blocks: tuple[tuple[int, np.ndarray], ...] = ()
    dense: np.ndarray | None = None

    @property
    def num_scalars(self) -> int:
        if self.dense is not None:
            return len(self.dense)
        return sum(len(rho) for _, rho in self.blocks)


@dataclass
class Federation:
    """Static description of who holds what; shared by every round."""

    spec: model.LossSpec
    train: Dataset | None
    client_indices: list[np.ndarray]
    byzantine: np.ndarray
    directions: DirectionSource
    k: int = 64
    local_epochs: int = 1
    mu: float = 1e-3
    eta: float = 0.01
    batch_size: int = 64
    base_seed: int = 0
    workers: int = 1

    @property
    def n(self) -> int:
        return len(self.client_indices)

    @property
    def f(self) -> int:
        return int(np.sum(self.byzantine))

    @property
    def d(self) -> int:
        return self.spec.dim

    @property
    def kind(self) -> DirectionKind:
        return self.directions.kind

    def batch(self, client: int, t: int, l: int, flip: bool = False) -> Dataset | None:
        if self.train is None:
            return None
        idx = minibatch(self.client_indices[client], self.batch_size, self.base_seed, t, l, client)
        X, y = self.train.X[idx], self.train.y[idx]
        if flip:
            y = flip_labels(y, self.train.num_classes)
        return Dataset(X, y, self.train.num_classes)


@dataclass
class RoundState:
    fed: Federation
    w: np.ndarray
    t: int = 1
    ledger: CommLedger = field(default_factory=CommLedger)
    last_broadcast: Broadcast | None = None


def apply_projected_update(w: np.ndarray, blocks, matrices: dict[int, np.ndarray], eta: float) -> np.ndarray:
    """``w - eta * sum_l P_l rho_l`` with the sum built direction by direction, then subtracted once."""
    step = np.zeros_like(w)
    for l, rho in blocks:
        for z, coef in zip(matrices[l], rho):
            step += (eta * coef) * z
    return w - step


def _map_clients(fed: Federation, fn, clients):
    if fed.workers > 1:
        with ThreadPoolExecutor(max_workers=fed.workers) as pool:
            return list(pool.map(fn, clients))
    return [fn(c) for c in clients]


def _participants(fed: Federation, attack: AttackSpec) -> list[int]:
    """Clients that run local training: all honest ones, plus Byzantine ones unless they only craft."""
    if attack.crafts_vectors:
        return [i for i in range(fed.n) if not fed.byzantine[i]]
    return list(range(fed.n))


def _local_zo(fed: Federation, w: np.ndarray, t: int, client: int, flip: bool,
              direction_sets: list[int], matrices: dict[int, np.ndarray]) -> np.ndarray:
    """Local epochs of one client; returns its ``(L, K)`` projection vectors."""
    local = w
    rhos = np.empty((fed.local_epochs, fed.k))
    for l in range(1, fed.local_epochs + 1):
        P = matrices[direction_sets[l - 1]]
        batch = fed.batch(client, t, l, flip)
        rho = zo.projections(fed.spec, local, P, fed.mu, batch, fed.kind)
        rhos[l - 1] = rho
        if l < fed.local_epochs:
            local = apply_projected_update(local, [(direction_sets[l - 1], rho)], matrices, fed.eta)
    return rhos


def _robust_round(fed: Federation, updates: dict[int, np.ndarray], rule: AggregationRule,
                  attack: AttackSpec) -> np.ndarray:
    """Aggregate one round of client vectors, substituting crafted Byzantine vectors where needed."""
    if attack.crafts_vectors and fed.f > 0:
        honest = np.array([updates[i] for i in range(fed.n) if not fed.byzantine[i]])
        bad = byzantine_vector(attack, honest, rule, fed.f, fed.byzantine)
        stack = assemble(honest, bad, fed.byzantine)
    else:
        stack = np.array([updates[i] for i in range(fed.n)])
    return aggregate(rule, stack)


def _zo_client_results(state: RoundState, attack: AttackSpec, direction_sets, matrices):
    fed, t = state.fed, state.t
    clients = _participants(fed, attack)
    flip = attack.kind == "lf"

    def work(i):
        return _local_zo(fed, state.w, t, i, flip and bool(fed.byzantine[i]), direction_sets, matrices)

    return dict(zip(clients, _map_clients(fed, work, clients)))


def _finish(state: RoundState, broadcast: Broadcast, new_w: np.ndarray, per_client: int) -> RoundState:
    state.w = new_w
    state.ledger.record(per_client, broadcast.num_scalars)
    state.last_broadcast = broadcast
    state.t += 1
    return state


def run_global_epoch_unbiased(state: RoundState, rule: AggregationRule, attack: AttackSpec) -> RoundState:
    fed, t, L = state.fed, state.t, state.fed.local_epochs
    sets = list(range(1, L + 1))
    matrices = {l: fed.directions.matrix(t, l) for l in sets}
    results = _zo_client_results(state, attack, sets, matrices)
    blocks = tuple(
        (l, _robust_round(fed, {i: r[l - 1] for i, r in results.items()}, rule, attack)) for l in sets
    )
    broadcast = Broadcast(t, blocks)
    return _finish(state, broadcast, apply_projected_update(state.w, blocks, matrices, fed.eta), L * fed.k)


def run_global_epoch_biased(state: RoundState, rule: AggregationRule, attack: AttackSpec) -> RoundState:
    fed, t, L = state.fed, state.t, state.fed.local_epochs
    matrices = {1: fed.directions.matrix(t, 1)}
    results = _zo_client_results(state, attack, [1] * L, matrices)
    cumulative = {i: r.sum(axis=0) for i, r in results.items()}
    blocks = ((1, _robust_round(fed, cumulative, rule, attack)),)
    broadcast = Broadcast(t, blocks)
    return _finish(state, broadcast, apply_projected_update(state.w, blocks, matrices, fed.eta), fed.k)


def run_global_epoch_unbiased_compressed(state: RoundState, rule: AggregationRule,
                                         attack: AttackSpec) -> RoundState:
    fed, t, L = state.fed, state.t, state.fed.local_epochs
    sets = list(range(1, L + 1))
    matrices = {l: fed.directions.matrix(t, l) for l in sets}
    fresh = L + 1
    matrices[fresh] = fed.directions.matrix(t, fresh)
    results = _zo_client_results(state, attack, sets, matrices)
    factor = fed.d if fed.kind is DirectionKind.SPHERE else 1.0
    reprojected = {}
    for i, rhos in results.items():
        local_sum = sum(zo.reconstruct(matrices[l], rho) for l, rho in zip(sets, rhos))
        reprojected[i] = factor * (matrices[fresh] @ local_sum) / fed.k
    blocks = ((fresh, _robust_round(fed, reprojected, rule, attack)),)
    broadcast = Broadcast(t, blocks)
    new_w = apply_projected_update(state.w, blocks, {fresh: matrices[fresh]}, fed.eta)
    return _finish(state, broadcast, new_w, fed.k)


def _local_sgd(fed: Federation, w: np.ndarray, t: int, client: int, flip: bool) -> np.ndarray:
    local = w
    total = np.zeros_like(w)
    for l in range(1, fed.local_epochs + 1):
        g = model.grad(fed.spec, local, fed.batch(client, t, l, flip))
        total += g
        local = local - fed.eta * g
    return total


def run_fedavg_epoch(state: RoundState, rule: AggregationRule, attack: AttackSpec) -> RoundState:
    fed, t = state.fed, state.t
    clients = _participants(fed, attack)
    flip = attack.kind == "lf"
    grads = _map_clients(fed, lambda i: _local_sgd(fed, state.w, t, i, flip and bool(fed.byzantine[i])),
                         clients)
    agg = _robust_round(fed, dict(zip(clients, grads)), rule, attack)
    broadcast = Broadcast(t, dense=agg)
    return _finish(state, broadcast, state.w - fed.eta * agg, fed.d)


EPOCH_RUNNERS = {
    Strategy.UNBIASED: run_global_epoch_unbiased,
    Strategy.BIASED: run_global_epoch_biased,
    Strategy.UNBIASED_COMPRESSED: run_global_epoch_unbiased_compressed,
    Strategy.FEDAVG: run_fedavg_epoch,
}


def run_global_epoch(strategy: Strategy, state: RoundState, rule: AggregationRule,
                     attack: AttackSpec) -> RoundState:
    return EPOCH_RUNNERS[Strategy(strategy)](state, rule, attack)


def client_recover_model(w_prev: np.ndarray, broadcast: Broadcast, directions: DirectionSource,
                         eta: float) -> np.ndarray:
    """Client-side reconstruction of the next global model from the broadcast alone."""
    if broadcast.dense is not None:
        return w_prev - eta * broadcast.dense
    matrices = {l: directions.matrix(broadcast.t, l) for l, _ in broadcast.blocks}
    return apply_projected_update(w_prev, broadcast.blocks, matrices, eta)


def uplink_per_epoch(strategy: Strategy, k: int, local_epochs: int, d: int) -> int:
    strategy = Strategy(strategy)
    if strategy is Strategy.UNBIASED:
        return local_epochs * k
    if strategy is Strategy.FEDAVG:
        return d
    return k


# -- experiments ----------------------------------------------------------

@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    seed: int
    accuracy: float
    train_loss: float
    uplink_scalars: int
    downlink_scalars: int
    wall_ms: int

    FIELDS = ("epoch", "seed", "accuracy", "train_loss", "uplink_scalars", "downlink_scalars", "wall_ms")


def build_federation(config, seed: int, train: Dataset, spec: model.LossSpec) -> Federation:
    from .data import PartitionSpec, partition

    parts = partition(train.y, config.n, PartitionSpec(config.partition.kind, config.partition.alpha, seed))
    byzantine = np.zeros(config.n, dtype=bool)
    byzantine[config.n - config.f:] = True
    return Federation(
        spec=spec, train=train, client_indices=parts, byzantine=byzantine,
        directions=DirectionSource(seed, config.K, spec.dim, config.direction),
        k=config.K, local_epochs=config.L, mu=config.mu, eta=config.eta,
        batch_size=config.batch_size, base_seed=seed, workers=config.workers,
    )


def run_seed(config, seed: int, datasets=None) -> list[MetricsRecord]:
    """One full training run; evaluated at epoch 0, every ``eval_every`` epochs and at ``T``."""
    from .config import load_datasets

    train, test = datasets if datasets is not None else load_datasets(config.dataset, seed)
    spec = model.MulticlassLogistic(train.num_classes, train.num_features, config.dataset.bias)
    fed = build_federation(config, seed, train, spec)
    state = RoundState(fed, np.zeros(spec.dim))
    rule, attack = config.aggregation_rule(), config.attack_spec()
    start = time.perf_counter()
    records = []

    def evaluate(epoch):
        wall = int(round(1000 * (time.perf_counter() - start))) if config.timing else 0
        records.append(MetricsRecord(
            epoch, seed, model.accuracy(spec, state.w, test), model.loss(spec, state.w, train),
            state.ledger.uplink_scalars, state.ledger.downlink_scalars, wall,
        ))

    evaluate(0)
    for epoch in range(1, config.T + 1):
        run_global_epoch(config.strategy, state, rule, attack)
        if epoch % config.eval_every == 0 or epoch == config.T:
            evaluate(epoch)
    return records


def run_experiment(config) -> list[MetricsRecord]:
    records = []
    for seed in config.seeds:
        records.extend(run_seed(config, seed))
    return records


def max_accuracy(records) -> float:
    return max(r.accuracy for r in records)
