"""Random matrix sequences and the two convergence tables.

Table 1 tracks ``A_*`` itself with cyclic canonical directions; table 2
tracks ``A_*^{-1}`` with canonical or Gaussian responses.  Both use

    A_k = A_* + (lam ** k / 2) (M_k + M_k^T),   M_k uniform on [0, 1]

around a Gaussian symmetric ``A_*``, and report the mean and max over
trials of the Frobenius distance after a given number of steps.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import SymMatrix, sym_eigenvalues
from .rng import SeededRng, derive_seed
from .sr1 import SkipPolicy
from .tracker import MatrixOracle, inverse_oracle, random_direction_oracle, track

DEFAULT_LAMBDAS = (0.9, 0.5, 0.1)
DEFAULT_STEPS = (10, 20, 50, 100)
# step n of the tables uses the perturbation with exponent n (1-based)
DEFAULT_FIRST_INDEX = 1
MAX_CONDITION = 1e6
MAX_REDRAWS = 100


def random_symmetric_gaussian(d: int, rng: SeededRng) -> SymMatrix:
    """``(M + M^T) / 2`` with i.i.d. standard normal ``M`` (row-major draws)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return SymMatrix.symmetrize(rng.gaussian_array(d * d).reshape(d, d))


@dataclass(frozen=True)
class PerturbedProvider:
    """Geometrically converging perturbations of ``a_star``.

    ``M_k`` is drawn from its own stream ``derive_seed(seed, k)`` so any
    ``A_k`` can be regenerated on its own.  Calling the provider with ``k``
    returns ``A_{k + first_index}``, so ``first_index=1`` starts the sequence
    at the first perturbed term (1-based counting).
    """

    a_star: SymMatrix
    lam: float
    seed: int
    first_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")

    @property
    def dim(self) -> int:
        return self.a_star.dim

    def perturbation(self, k: int) -> np.ndarray:
        d = self.dim
        mk = SeededRng(derive_seed(self.seed, k)).uniform_array(d * d).reshape(d, d)
        return (self.lam ** k / 2.0) * (mk + mk.T)

    def __call__(self, k: int) -> SymMatrix:
        if k < 0:
            raise ValueError(f"index must be >= 0, got {k}")
        return SymMatrix(self.a_star.array + self.perturbation(k + self.first_index))

    def limit(self) -> SymMatrix:
        return self.a_star

    def deviation_bound(self, k: int) -> float:
        # (M + M^T)/2 has entries in [0, 1], so its operator norm is at most d
        return self.lam ** (k + self.first_index) * self.dim


def perturbed_provider_matrix(p: PerturbedProvider, k: int) -> SymMatrix:
    return p(k)


def condition_number(a: SymMatrix) -> float:
    w = np.abs(sym_eigenvalues(a))
    return float(w.max() / w.min()) if w.min() > 0.0 else float("inf")


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

@dataclass
class Cell:
    param: str
    steps: int
    values: list[float]

    @property
    def mean(self) -> float:
        return float(statistics.fmean(self.values))

    @property
    def max(self) -> float:
        return float(max(self.values))

    @property
    def median(self) -> float:
        return float(statistics.median(self.values))

    @property
    def trials(self) -> int:
        return len(self.values)


@dataclass
class TableResult:
    name: str
    cells: list[Cell] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    base_seed: int = 0
    resamples: int = 0

    def cell(self, param, steps: int) -> Cell:
        key = _param_label(param)
        for c in self.cells:
            if c.param == key and c.steps == steps:
                return c
        raise KeyError((param, steps))

    def per_trial(self, param) -> dict[int, list[float]]:
        key = _param_label(param)
        return {c.steps: c.values for c in self.cells if c.param == key}


def _param_label(param) -> str:
    if isinstance(param, float):
        return repr(param)
    return str(param)


def _trial_threads() -> int:
    try:
        return max(0, int(os.environ.get("SR1_THREADS", "0")))
    except ValueError:
        return 0


def _map_trials(fn, trials: int) -> list:
    threads = _trial_threads()
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def _distances_at(report, steps: Sequence[int]) -> list[float]:
    return [report.steps[n - 1].distance_fro for n in steps]


def table1(d: int = 10, lambdas: Sequence[float] = DEFAULT_LAMBDAS,
           steps: Sequence[int] = DEFAULT_STEPS, trials: int = 20,
           base_seed: int = 0, policy: SkipPolicy = SkipPolicy(),
           first_index: int = DEFAULT_FIRST_INDEX) -> TableResult:
    """Distance ``||B_n - A_*||_F`` after ``n`` steps, cyclic canonical directions.

    Each trial draws one ``A_*`` shared by every lambda.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    steps = sorted(steps)
    seeds = [derive_seed(base_seed, t) for t in range(trials)]
    result = TableResult("table1", seeds=seeds, base_seed=base_seed)
    if not steps:
        return result
    horizon = steps[-1]

    def run(t):
        seed = seeds[t]
        a_star = random_symmetric_gaussian(d, SeededRng(seed))
        rows = []
        for lam in lambdas:
            provider = PerturbedProvider(a_star, lam, derive_seed(seed, 1), first_index)
            rep = track(MatrixOracle(provider, d), horizon, policy, check_bounds=False,
                         operator_distances=False)
            rows.append(_distances_at(rep, steps))
        return rows

    per_trial = _map_trials(run, trials)
    for i, lam in enumerate(lambdas):
        for j, n in enumerate(steps):
            result.cells.append(Cell(_param_label(float(lam)), n, [per_trial[t][i][j] for t in range(trials)]))
    return result


def draw_well_conditioned(d: int, rng: SeededRng, max_condition: float | None = MAX_CONDITION):
    """Draw ``A_*`` until its condition number is at most ``max_condition``.

    Returns the matrix and the number of rejected draws.
    """
    for redraws in range(MAX_REDRAWS + 1):
        a = random_symmetric_gaussian(d, rng)
        if max_condition is None or condition_number(a) <= max_condition:
            return a, redraws
    raise ArithmeticError(f"no draw with condition number <= {max_condition} in {MAX_REDRAWS} redraws")


def table2(d: int = 10, lam: float = 0.5, steps: Sequence[int] = DEFAULT_STEPS,
           trials: int = 20, base_seed: int = 0, policy: SkipPolicy = SkipPolicy(),
           max_condition: float | None = MAX_CONDITION,
           first_index: int = DEFAULT_FIRST_INDEX) -> TableResult:
    """Distance ``||B_n - A_*^{-1}||_F`` with canonical and with Gaussian responses."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    steps = sorted(steps)
    seeds = [derive_seed(base_seed, t) for t in range(trials)]
    result = TableResult("table2", seeds=seeds, base_seed=base_seed)
    if not steps:
        return result
    horizon = steps[-1]

    def run(t):
        seed = seeds[t]
        a_star, redraws = draw_well_conditioned(d, SeededRng(seed), max_condition)
        provider = PerturbedProvider(a_star, lam, derive_seed(seed, 1), first_index)
        canonical = track(inverse_oracle(provider, d), horizon, policy, check_bounds=False,
                         operator_distances=False)
        rand = track(random_direction_oracle(provider, d, derive_seed(seed, 2)), horizon, policy,
                     check_bounds=False, operator_distances=False)
        return _distances_at(canonical, steps), _distances_at(rand, steps), redraws

    per_trial = _map_trials(run, trials)
    result.resamples = sum(r[2] for r in per_trial)
    for i, label in enumerate(("canonical", "random")):
        for j, n in enumerate(steps):
            result.cells.append(Cell(label, n, [per_trial[t][i][j] for t in range(trials)]))
    return result


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

CSV_HEADER = ("param", "steps", "mean", "max", "trials")


def table_to_csv(t: TableResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in t.cells:
        writer.writerow([c.param, c.steps, repr(c.mean), repr(c.max), c.trials])
    return buf.getvalue()


def table_to_json(t: TableResult) -> str:
    doc = {
        "name": t.name,
        "base_seed": t.base_seed,
        "seeds": t.seeds,
        "resamples": t.resamples,
        "cells": [
            {"param": c.param, "steps": c.steps, "mean": c.mean, "max": c.max, "trials": c.trials}
            for c in t.cells
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_table(t: TableResult, fmt: str = "csv", destination=None) -> str:
    """Render ``t`` as CSV or JSON; write it to ``destination`` if given.

    Returns the rendered text.
    """
    if fmt == "csv":
        text = table_to_csv(t)
    elif fmt == "json":
        text = table_to_json(t)
    else:
        raise ValueError(f"unknown format {fmt!r} (expected csv or json)")
    if destination is not None:
        path = Path(destination)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write table to {path}: {exc}") from exc
    return text


def default_filename(t: TableResult, fmt: str = "csv") -> str:
    return f"{t.name}_{t.base_seed}.{fmt}"
