"""Proxy-guided search: short-evaluate N configs, then rank with the surrogate and fully evaluate the top K per round."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .space import HparamConfig, HparamSpace, encode
from .surrogate import ProxyRecord, Surrogate, fit_proxy

log = logging.getLogger(__name__)

# beyond this size the random strategy samples by rejection instead of listing the space
_ENUMERATE_LIMIT = 200_000


class Evaluator(Protocol):
    def short_eval(self, config: HparamConfig) -> float: ...

    def full_eval(self, config: HparamConfig) -> float: ...


@dataclass(frozen=True)
class SearchBudget:
    M: int
    N: int
    K: int
    short_epochs: int = 10
    full_epochs: int = 100
    rounds: int = 4
    seed: int = 0
    candidates_per_round: int | None = None  # None: rank every unevaluated pool member

    def __post_init__(self):
        if min(self.M, self.N, self.K) < 1:
            raise ValueError("M, N and K must be >= 1")
        if not self.K < self.N:
            raise ValueError(f"K ({self.K}) must be smaller than N ({self.N})")
        if not self.N <= self.M / 4:
            raise ValueError(f"N ({self.N}) must be at most M/4 ({self.M / 4:g})")
        if self.N > self.M / 10:
            log.warning("N=%d is more than a tenth of M=%d", self.N, self.M)
        if not 0 <= self.short_epochs < self.full_epochs:
            raise ValueError("short_epochs must be >= 0 and smaller than full_epochs")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.candidates_per_round is not None and self.candidates_per_round < 1:
            raise ValueError("candidates_per_round must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("M", "N", "K", "short_epochs", "full_epochs", "rounds", "seed", "candidates_per_round")}


class Strategy(Protocol):
    """Draws up to ``count`` distinct configs outside ``exclude``."""

    def draw(self, space: HparamSpace, count: int, rng: np.random.Generator,
             exclude: set[str], pool: list[HparamConfig] | None) -> list[HparamConfig]: ...


class RandomStrategy:
    def draw(self, space, count, rng, exclude, pool=None):
        if pool is None and space.size <= _ENUMERATE_LIMIT:
            pool = list(space)
        if pool is not None:
            free = [c for c in pool if c.key() not in exclude]
            picks = rng.permutation(len(free))[:count]
            return [free[i] for i in picks]
        out: dict[str, HparamConfig] = {}
        for _ in range(50 * count):
            c = space.at(int(rng.integers(space.size)))
            if c.key() not in exclude:
                out.setdefault(c.key(), c)
            if len(out) == count:
                break
        return list(out.values())


STRATEGIES: dict[str, Strategy] = {"random": RandomStrategy()}


@dataclass
class Proposal:
    items: list[tuple[HparamConfig, float]]
    exhausted: bool


def propose(space: HparamSpace, proxy: Surrogate, strategy="random", count: int = 1, seed: int = 0,
            exclude=(), pool=None) -> Proposal:
    """Draw unseen configs and score each with one surrogate forward pass."""
    if count < 1:
        raise ValueError("count must be >= 1")
    strat = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    excl = {c.key() if isinstance(c, HparamConfig) else space.config(c).key() for c in exclude}
    configs = strat.draw(space, count, np.random.default_rng(seed), excl, pool)
    items = [(c, proxy(encode(space, c))) for c in configs]
    return Proposal(items, len(items) < count)


@dataclass
class HistoryEntry:
    round: int
    config: HparamConfig
    encoding: np.ndarray
    predicted: float | None
    realized: float
    fidelity: str
    seconds: float | None = None
    error: str | None = None

    def record(self) -> ProxyRecord:
        return ProxyRecord(self.config, self.encoding, self.realized, self.fidelity)

    def to_dict(self) -> dict:
        out = {
            "round": self.round,
            "config": self.config.as_dict(),
            "encoding": [float(x) for x in self.encoding],
            "predicted": self.predicted,
            "realized": self.realized,
            "fidelity": self.fidelity,
            "seconds": self.seconds,
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_dict(cls, space: HparamSpace, data: dict) -> "HistoryEntry":
        config = space.config(data["config"])
        return cls(int(data["round"]), config, encode(space, config), data.get("predicted"),
                   float(data["realized"]), data["fidelity"], data.get("seconds"), data.get("error"))


def write_history(path, entries) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_history(path, space: HparamSpace) -> list[HistoryEntry]:
    """Parse a history file; a truncated final line is dropped."""
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            log.warning("%s: skipping unparsable history line", path)
            continue
        out.append(HistoryEntry.from_dict(space, data))
    return out


@dataclass
class SearchResult:
    best: HparamConfig
    best_score: float
    history: list[HistoryEntry]
    proxy: Surrogate | None
    evaluator_calls: dict = field(default_factory=dict)
    proxy_calls: int = 0


def _sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def search(space: HparamSpace, evaluator: Evaluator, budget: SearchBudget, strategy="random",
           resume=(), timed: bool = False, on_entry=None) -> SearchResult:
    """Run the loop and return the best fully evaluated config.

    With ``rounds == 0`` the best short-evaluated config is returned. Entries
    in ``resume`` (an earlier history of the same run) supply scores without
    calling the evaluator again. ``on_entry`` sees each entry as it lands.
    """
    if budget.M > space.size:
        raise ValueError(f"M ({budget.M}) exceeds the space size ({space.size})")
    rng = np.random.default_rng(_sub_seed(budget.seed, 0))
    strat = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    if budget.M == space.size:
        pool = list(space) if space.size <= _ENUMERATE_LIMIT else None
    else:
        pool = sorted(strat.draw(space, budget.M, rng, set(), None), key=space.index)

    cache = {(e.config.key(), e.fidelity): e for e in resume}
    calls = {"short": 0, "full": 0}
    history: list[HistoryEntry] = []

    def run(config, fidelity, rnd, predicted):
        hit = cache.get((config.key(), fidelity))
        if hit is not None:
            entry = HistoryEntry(rnd, config, encode(space, config), predicted, hit.realized,
                                 fidelity, hit.seconds, hit.error)
        else:
            fn = evaluator.short_eval if fidelity == "short" else evaluator.full_eval
            calls[fidelity] += 1
            start = time.perf_counter()
            error = None
            try:
                score = float(fn(config))
                if not (math.isfinite(score) and 0.0 <= score <= 1.0):
                    raise ValueError(f"score {score} outside [0, 1]")
            except Exception as exc:  # evaluator failures are recorded, not raised
                log.warning("evaluation of %s failed: %s", config.key(), exc)
                score, error = 0.0, f"{type(exc).__name__}: {exc}"
            seconds = time.perf_counter() - start if timed else None
            entry = HistoryEntry(rnd, config, encode(space, config), predicted, score, fidelity, seconds, error)
        history.append(entry)
        if on_entry is not None:
            on_entry(entry)
        return entry

    initial = strat.draw(space, budget.N, np.random.default_rng(_sub_seed(budget.seed, 1)), set(), pool)
    for c in initial:
        run(c, "short", 0, None)

    proxy_seed = _sub_seed(budget.seed, 2)
    proxy = fit_proxy([e.record() for e in history], seed=proxy_seed) if len(history) >= 2 else None
    proxy_calls = 0
    fully: list[HparamConfig] = []
    for rnd in range(1, budget.rounds + 1):
        if proxy is None:
            break
        count = budget.candidates_per_round or (len(pool) if pool is not None else 1000)
        before = proxy.forward_calls
        prop = propose(space, proxy, strat, count, _sub_seed(budget.seed, 3, rnd), fully, pool)
        proxy_calls += proxy.forward_calls - before
        ranked = sorted(prop.items, key=lambda it: (-it[1], it[0].digest()))
        if not ranked:
            log.warning("round %d: no unevaluated configs remain", rnd)
            break
        for config, predicted in ranked[: budget.K]:
            fully.append(config)
            run(config, "full", rnd, predicted)
        # short records stay in the training set alongside the full ones
        proxy = fit_proxy([e.record() for e in history], seed=proxy_seed)

    fidelity = "full" if any(e.fidelity == "full" for e in history) else "short"
    candidates = [e for e in history if e.fidelity == fidelity]
    best = max(candidates, key=lambda e: e.realized)
    return SearchResult(best.config, best.realized, history, proxy, calls, proxy_calls)


def random_search(space: HparamSpace, evaluator: Evaluator, n_full: int, seed: int = 0, pool=None) -> SearchResult:
    """Baseline: fully evaluate ``n_full`` uniformly drawn distinct configs."""
    configs = RandomStrategy().draw(space, n_full, np.random.default_rng(_sub_seed(seed, 9)), set(), pool)
    history = []
    for c in configs:
        history.append(HistoryEntry(1, c, encode(space, c), None, float(evaluator.full_eval(c)), "full"))
    best = max(history, key=lambda e: e.realized)
    return SearchResult(best.config, best.realized, history, None, {"short": 0, "full": len(history)}, 0)
