"""Small real-coded genetic algorithm with a hard evaluation budget."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PENALTY = 1e6


@dataclass(frozen=True)
class GaConfig:
    bounds: tuple[tuple[float, float], ...]
    population: int = 40
    max_trials: int = 1000
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    sigma_frac: float = 0.05
    tournament: int = 3
    target_cost: float = -math.inf
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))
        errs = self.validate()
        if errs:
            raise ValueError("; ".join(errs))

    def validate(self) -> list[str]:
        errs = []
        if self.population < 4:
            errs.append("population must be at least 4")
        if self.max_trials < self.population:
            errs.append("max_trials must be at least the population size")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                errs.append(f"{name} must lie in [0, 1]")
        if not 0 < self.sigma_frac <= 1:
            errs.append("sigma_frac must lie in (0, 1]")
        if self.tournament < 1:
            errs.append("tournament size must be positive")
        if not self.bounds:
            errs.append("bounds must be nonempty")
        for i, (lo, hi) in enumerate(self.bounds):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                errs.append(f"bounds[{i}] must be finite with lo <= hi")
        return errs


@dataclass
class GaResult:
    best_params: np.ndarray
    best_cost: float
    history: list[dict] = field(default_factory=list)
    evaluations: int = 0
    reached_target: bool = False


def _mean_pairwise(pop: np.ndarray, span: np.ndarray) -> float:
    x = pop / np.where(span > 0, span, 1.0)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    n = len(x)
    return float(d.sum() / (n * (n - 1))) if n > 1 else 0.0


def ga_optimize(objective: Callable[[np.ndarray], float], cfg: GaConfig,
                initial: Sequence[Sequence[float]] = (),
                map_fn: Callable[[Callable, list], list] | None = None) -> GaResult:
    """Generational GA: tournament selection, uniform crossover, Gaussian mutation, one elite.

    The mutation standard deviation starts at ``sigma_frac`` of each range
    and is annealed linearly to 2% of that by the end of the budget.

    ``initial`` vectors (clipped to bounds) seed the first generation; the
    rest is drawn uniformly. ``map_fn`` evaluates a list of vectors, e.g.
    on a process pool; results must come back in order. Stops after
    ``max_trials`` objective calls or once the best cost is at or below
    ``target_cost``.
    """
    rng = np.random.default_rng(cfg.seed)
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    span = hi - lo
    dim = len(lo)
    mapper = map_fn or (lambda fn, xs: [fn(x) for x in xs])

    def evaluate(xs: list[np.ndarray]) -> list[float]:
        out = []
        for c in mapper(objective, xs):
            c = float(c)
            out.append(c if math.isfinite(c) else PENALTY)
        return out

    seeds = [np.clip(np.asarray(s, dtype=float), lo, hi) for s in initial][: cfg.population]
    n_rand = cfg.population - len(seeds)
    pop = seeds + [lo + span * rng.random(dim) for _ in range(n_rand)]
    costs = evaluate(pop)
    n_eval = len(pop)
    history: list[dict] = []

    def record(gen: int) -> None:
        arr = np.array(pop)
        div = _mean_pairwise(arr, span)
        history.append({"generation": gen, "trial": n_eval, "best_cost": float(min(costs)),
                        "mean_cost": float(np.mean(costs)), "diversity": div})
        log.info("generation %d: trials %d best %.6g mean %.6g diversity %.4f",
                 gen, n_eval, min(costs), np.mean(costs), div)

    record(0)
    gen = 0
    while n_eval < cfg.max_trials and min(costs) > cfg.target_cost:
        gen += 1
        elite = int(np.argmin(costs))

        def pick() -> int:
            idx = rng.integers(0, len(pop), cfg.tournament)
            return int(idx[np.argmin([costs[i] for i in idx])])

        n_new = min(cfg.population - 1, cfg.max_trials - n_eval)
        # mutation width shrinks linearly to 2% over the budget
        sigma = cfg.sigma_frac * span * (1.0 - 0.98 * n_eval / cfg.max_trials)
        children = []
        for _ in range(n_new):
            p1, p2 = pop[pick()], pop[pick()]
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(dim) < 0.5
                child = np.where(mask, p1, p2)
            else:
                child = p1.copy()
            mut = rng.random(dim) < cfg.mutation_rate
            child = child + mut * rng.normal(0.0, 1.0, dim) * sigma
            children.append(np.clip(child, lo, hi))
        child_costs = evaluate(children)
        n_eval += len(children)
        # elitism: the best survives; the children fill the rest, and when
        # the budget cuts a generation short the best old members stay on
        keep = [elite] + [i for i in np.argsort(costs) if i != elite][: cfg.population - 1 - n_new]
        pop = [pop[i] for i in keep] + children
        costs = [costs[i] for i in keep] + child_costs
        record(gen)
    best = int(np.argmin(costs))
    return GaResult(np.array(pop[best]), float(costs[best]), history, n_eval,
                    costs[best] <= cfg.target_cost)
