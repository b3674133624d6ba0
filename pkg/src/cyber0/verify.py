"""Property suites: Monte Carlo checks of the estimator, the projection
embedding, and brute-force references for the aggregation rules.

Every check reports the measured value next to the bound it is held to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import aggregation, model, zo
from .aggregation import AggregationRule
from .core_math import DirectionKind, sample_directions
from .data import synthetic_classification
from .model import MulticlassLogistic, Quadratic


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: measured={self.measured:.6g} bound={self.bound:.6g}{extra}"


def _directions(seed: int, count: int, d: int, kind=DirectionKind.SPHERE) -> np.ndarray:
    # seeds are consecutive integers offset by a large per-suite base
    base = (seed * 0x100000001B3) % 2**63
    return sample_directions(np.arange(base, base + count, dtype=np.uint64), d, kind)


def _scaled_estimates(spec, w, Z, mu, batch=None) -> np.ndarray:
    """``g_r`` (dimension factor included) for every row of ``Z``, without the 1/K average."""
    return zo.projections(spec, w, Z, mu, batch) * len(Z)


def _logistic_probe(seed: int):
    data = synthetic_classification(seed, 64, 6, 4, margin=2.0)
    spec = MulticlassLogistic(4, 6)
    w = 0.5 * np.random.default_rng(seed).standard_normal(spec.dim)
    return spec, w, data


# -- estimator ------------------------------------------------------------

def zo_unbiasedness(draws: int = 100_000, d: int = 8, seed: int = 1) -> list[Check]:
    """Mean of ``z g`` over fresh sphere directions equals the gradient of a quadratic."""
    rng = np.random.default_rng(seed)
    spec = Quadratic(rng.standard_normal(d))
    w = rng.standard_normal(d)
    true = model.grad(spec, w)
    Z = _directions(seed, draws, d)
    samples = Z * _scaled_estimates(spec, w, Z, 1e-3)[:, None]
    err = np.abs(samples.mean(axis=0) - true)
    se = samples.std(axis=0, ddof=1) / math.sqrt(draws)
    worst = float(np.max(err / se))
    return [Check("zo-unbiasedness: max |mean(zg) - grad| / SE", worst <= 3.0, worst, 3.0,
                  f"{draws} draws, d={d}")]


def zo_second_moment(trials: int = 200, draws: int = 2000, seed: int = 2) -> list[Check]:
    """``E||z g||^2 <= 2 d ||grad||^2 + L^2 mu^2 d^2 / 2`` over quadratic and logistic probes."""
    satisfied = 0
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        mu = float(10 ** rng.uniform(-3, 0))
        if trial % 2 == 0:
            d = int(rng.integers(2, 30))
            spec, batch = Quadratic(rng.standard_normal(d)), None
            w = rng.standard_normal(d)
            lip = 1.0
        else:
            spec, w, batch = _logistic_probe(seed * 1000 + trial)
            d = spec.dim
            lip = model.estimate_lipschitz(spec, w, batch, probes=16, radius=mu, rng=rng)
        Z = _directions(seed * 7919 + trial, draws, d)
        g = _scaled_estimates(spec, w, Z, mu, batch)
        moment = float(np.mean(g * g))  # ||z|| = 1 on the sphere
        grad_sq = float(np.sum(model.grad(spec, w, batch) ** 2))
        bound = 2 * d * grad_sq + lip**2 * mu**2 * d**2 / 2
        satisfied += moment <= bound
        worst = max(worst, moment / bound)
    rate = satisfied / trials
    return [Check("zo-second-moment: fraction of trials within bound", rate >= 0.99, rate, 0.99,
                  f"{trials} trials x {draws} draws, max moment/bound={worst:.3f}")]


def zo_projection_moment(draws: int = 1_000_000, d: int = 10, seed: int = 3) -> list[Check]:
    """With mu = 0 on the sphere, ``E||z g||^2 = d ||grad||^2``."""
    rng = np.random.default_rng(seed)
    grad = rng.standard_normal(d)
    Z = _directions(seed, draws, d)
    g = d * (Z @ grad)
    ratio = float(np.mean(g * g)) / (d * float(grad @ grad))
    return [Check("zo-projection-moment: |E||zg||^2 / (d||grad||^2) - 1|", abs(ratio - 1) <= 0.02,
                  abs(ratio - 1), 0.02, f"{draws} draws, d={d}")]


def zo_bias(draws: int = 100_000, mu: float = 0.05, seed: int = 4) -> list[Check]:
    """``||E[z g] - grad|| <= L mu`` plus Monte Carlo error on a logistic probe."""
    spec, w, batch = _logistic_probe(seed)
    rng = np.random.default_rng(seed)
    lip = model.estimate_lipschitz(spec, w, batch, probes=64, radius=mu, rng=rng)
    Z = _directions(seed, draws, spec.dim)
    samples = Z * _scaled_estimates(spec, w, Z, mu, batch)[:, None]
    gap = float(np.linalg.norm(samples.mean(axis=0) - model.grad(spec, w, batch)))
    mc = 3 * math.sqrt(float(np.sum(samples.var(axis=0, ddof=1))) / draws)
    bound = lip * mu + mc
    return [Check("zo-bias: ||mean(zg) - grad||", gap <= bound, gap, bound,
                  f"L={lip:.4g}, mu={mu}, Monte Carlo allowance={mc:.3g}")]


def jl_embedding(eps: float = 0.5, delta: float = 0.01, d: int = 2048, vectors: int = 10_000,
                 matrices: int = 10, seed: int = 5) -> list[Check]:
    """``||sqrt(d/K) P x||^2 / ||x||^2`` stays in ``[1-eps, 1+eps]`` except with rate <= delta."""
    k = math.ceil(64 * eps**-2 * math.log(2 / delta))
    rng = np.random.default_rng(seed)
    failures, worst = 0, 0.0
    per = vectors // matrices
    for m in range(matrices):
        P = _directions(seed * 104729 + m, k, d)
        X = rng.standard_normal((d, per))
        ratio = (d / k) * np.sum((P @ X) ** 2, axis=0) / np.sum(X * X, axis=0)
        failures += int(np.sum(np.abs(ratio - 1) > eps))
        worst = max(worst, float(np.max(np.abs(ratio - 1))))
    rate = failures / (per * matrices)
    return [Check(f"jl: failure rate at K={k}", rate <= delta, rate, delta,
                  f"d={d}, eps={eps}, {per * matrices} vectors, max |ratio-1|={worst:.3f}")]


# -- aggregation references -----------------------------------------------

def brute_cwtm(rows: list[list[float]], beta: float) -> list[float]:
    b = math.floor(beta * len(rows))
    out = []
    for j in range(len(rows[0])):
        column = sorted(r[j] for r in rows)
        kept = column[b:len(column) - b]
        out.append(math.fsum(kept) / len(kept))
    return out


def _dist(a, b) -> float:
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a, b)))


def brute_krum(rows: list[list[float]], f: int, squared: bool = False) -> list[float]:
    n = len(rows)
    scores = []
    for i in range(n):
        ds = sorted(_dist(rows[i], rows[j]) ** (2 if squared else 1) for j in range(n) if j != i)
        scores.append(math.fsum(ds[:n - f - 2]))
    best = min(scores)
    # ties up to rounding go to the lowest index
    return list(rows[next(i for i in range(n) if scores[i] <= best * (1 + 1e-12))])


def brute_nnm(rows: list[list[float]], f: int) -> list[list[float]]:
    n = len(rows)
    out = []
    for i in range(n):
        near = sorted(range(n), key=lambda j: (_dist(rows[i], rows[j]), j))[:n - f]
        out.append([math.fsum(rows[j][c] for j in near) / len(near) for c in range(len(rows[0]))])
    return out


def random_instance(rng: np.random.Generator) -> np.ndarray:
    n, dim = int(rng.integers(3, 9)), int(rng.integers(1, 5))
    x = rng.standard_normal((n, dim))
    if rng.random() < 0.3:
        x[int(rng.integers(n))] = x[0]          # exact duplicate rows
    if rng.random() < 0.3:
        x[-1] *= 10 ** rng.uniform(0.5, 1.5)     # far outlier
    return x


def agg_oracles(instances: int = 100, seed: int = 6, tol: float = 1e-12) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {"cwtm": 0.0, "krum": 0.0, "nnm": 0.0}
    for _ in range(instances):
        x = random_instance(rng)
        rows = x.tolist()
        n = len(x)
        beta = float(rng.choice([0.0, 0.125, 0.2, 0.25, 1 / 3, 0.4]))
        if n - 2 * math.floor(beta * n) >= 1:
            diff = np.abs(aggregation.cwtm(x, beta) - brute_cwtm(rows, beta))
            worst["cwtm"] = max(worst["cwtm"], float(diff.max()))
        f = int(rng.integers(0, n - 2))
        diff = np.abs(aggregation.krum(x, f) - brute_krum(rows, f))
        worst["krum"] = max(worst["krum"], float(diff.max()))
        f = int(rng.integers(0, n))
        diff = np.abs(aggregation.nnm(x, f) - np.array(brute_nnm(rows, f)))
        worst["nnm"] = max(worst["nnm"], float(diff.max()))
    example = aggregation.cwtm([[2, 2, 0], [0, -1, -1], [4, 0, -4]], 1 / 3)
    ex_err = float(np.max(np.abs(example - [2, 0, -1])))
    checks = [Check(f"agg-oracles: {name} vs brute force", err <= tol, err, tol, f"{instances} instances")
              for name, err in worst.items()]
    checks.append(Check("agg-oracles: CWTM_1/3 worked example -> [2,0,-1]", ex_err <= tol, ex_err, tol))
    return checks


def robustness_probe(draws: int = 1000, seed: int = 7) -> list[Check]:
    """Worst empirical kappa of CWTM(1/4) and the mean over random adversarial pairs (n=8, f=2)."""
    rng = np.random.default_rng(seed)
    honest = rng.standard_normal((6, 4))
    worst = {"cwtm": 0.0, "mean": 0.0}
    rules = {"cwtm": AggregationRule("cwtm", 0.25, 2), "mean": AggregationRule()}
    for _ in range(draws):
        bad = rng.standard_normal((2, 4)) * 10 ** rng.uniform(0, 3)
        x = np.vstack([honest, bad])
        for name, rule in rules.items():
            worst[name] = max(worst[name], aggregation.empirical_robustness(rule, x, range(6)))
    ok = math.isfinite(worst["cwtm"]) and worst["cwtm"] <= worst["mean"]
    return [Check("robustness-probe: worst kappa CWTM(1/4) <= worst kappa mean", ok, worst["cwtm"],
                  worst["mean"], f"{draws} adversarial draws, n=8, f=2")]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "zo-unbiasedness": zo_unbiasedness,
    "zo-second-moment": zo_second_moment,
    "zo-projection-moment": zo_projection_moment,
    "zo-bias": zo_bias,
    "jl": jl_embedding,
    "agg-oracles": agg_oracles,
    "robustness-probe": robustness_probe,
}


def run_suite(name: str, emit: Callable[[str], None] = print) -> bool:
    names = list(SUITES) if name == "all" else [name]
    if any(n not in SUITES for n in names):
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all")
    ok = True
    for n in names:
        for check in SUITES[n]():
            emit(check.line())
            ok &= check.passed
    return ok
