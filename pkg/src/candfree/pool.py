"""Labeled/unlabeled bookkeeping, the simulated annotator and the label budget."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import Mode, SelectionBatch


class PoolError(ValueError):
    pass


class DuplicateSelectionError(PoolError):
    """A selected id is not in the unlabeled pool (already labeled or unknown)."""


class BudgetExhaustedError(PoolError):
    pass


@dataclass(frozen=True)
class BudgetSchedule:
    initial: int
    batch: int
    total: int

    def __post_init__(self):
        if self.initial < 1 or self.batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.total < self.initial:
            raise ValueError(f"total budget {self.total} is smaller than the initial batch {self.initial}")

    def next_size(self, labels_used: int, pool_remaining: int) -> int:
        """Size of the next batch; 0 once the budget or the pool is exhausted.

        The last batch may be partial so the budget is reached exactly.
        """
        want = self.initial if labels_used == 0 else self.batch
        return max(0, min(want, self.total - labels_used, pool_remaining))

    def sizes(self, pool_size: int) -> list[int]:
        out, used = [], 0
        while (n := self.next_size(used, pool_size - used)) > 0:
            out.append(n)
            used += n
        return out

    def to_dict(self) -> dict:
        return {"initial": self.initial, "batch": self.batch, "total": self.total}


class Oracle:
    """Ground-truth lookup that counts every label it hands out.

    Labels can only be read back for ids that were annotated through
    :meth:`annotate`.
    """

    def __init__(self, labels, budget: int):
        self._labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if budget < 0:
            raise ValueError("budget must be >= 0")
        self.budget = int(budget)
        self.issued = 0
        self._revealed = np.zeros(self._labels.size, dtype=bool)

    def __len__(self) -> int:
        return self._labels.size

    def check(self, n: int) -> None:
        if self.issued + n > self.budget:
            raise BudgetExhaustedError(
                f"annotating {n} more would use {self.issued + n} labels; budget is {self.budget}"
            )

    def annotate(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        self.check(ids.size)
        self.issued += ids.size
        self._revealed[ids] = True
        return self._labels[ids]

    def labels_for(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if not np.all(self._revealed[ids]):
            raise PoolError("label requested for an id that was never annotated")
        return self._labels[ids]


def remaining_budget(oracle: Oracle) -> int:
    return oracle.budget - oracle.issued


@dataclass(frozen=True)
class PoolState:
    unlabeled: np.ndarray
    labeled: np.ndarray
    history: tuple[SelectionBatch, ...] = ()
    iteration: int = 0

    @property
    def size(self) -> int:
        return int(self.unlabeled.size + self.labeled.size)


def new_pool(size: int) -> PoolState:
    if size < 1:
        raise ValueError("dataset size must be >= 1")
    return PoolState(np.arange(size, dtype=np.int64), np.empty(0, dtype=np.int64))


def commit_batch(state: PoolState, batch: SelectionBatch, oracle: Oracle) -> PoolState:
    """Annotate ``batch`` and move it from the unlabeled to the labeled set.

    Nothing is modified when an error is raised.
    """
    ids = batch.ids
    in_pool = np.isin(ids, state.unlabeled)
    if not np.all(in_pool):
        bad = ids[~in_pool][:5].tolist()
        raise DuplicateSelectionError(f"ids not in the unlabeled pool: {bad}")
    oracle.check(ids.size)
    oracle.annotate(ids)
    return PoolState(
        unlabeled=state.unlabeled[~np.isin(state.unlabeled, ids)],
        labeled=np.concatenate([state.labeled, ids]),
        history=state.history + (batch,),
        iteration=state.iteration + 1,
    )


def history_records(state: PoolState) -> list[dict]:
    return [
        {
            "iteration": b.iteration,
            "ids": b.ids.tolist(),
            "phase": None if b.phase is None else b.phase.value,
        }
        for b in state.history
    ]


def export_history(state: PoolState, path) -> Path:
    """One JSON object per line: ``{"iteration", "ids", "phase"}``."""
    path = Path(path)
    with open(path, "w") as fh:
        for rec in history_records(state):
            fh.write(json.dumps(rec) + "\n")
    return path


def read_history(path) -> list[SelectionBatch]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                phase = rec.get("phase")
                out.append(SelectionBatch(rec["iteration"], rec["ids"], None, None if phase is None else Mode(phase)))
    return out
