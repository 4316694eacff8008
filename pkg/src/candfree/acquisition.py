"""Confidence scoring and batch selection.

Scores are derived from per-sample class distributions. High-confidence (HC)
is the maximum class probability; low-confidence (LC) is one minus that
maximum. Selection always takes the highest-scoring samples with ties broken
by ascending sample id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_SUM_ATOL = 1e-6


class InvalidDistributionError(ValueError):
    """Raised when a vector is not a valid class distribution."""


class Mode(str, enum.Enum):
    HIGH = "HIGH"
    LOW = "LOW"
    RANDOM = "RANDOM"


class StrategyKind(str, enum.Enum):
    HC = "HC"
    LC = "LC"
    HCLC = "HCLC"
    LCHC = "LCHC"
    RHC = "RHC"
    RLC = "RLC"
    HLH = "HLH"
    RANDOM = "RANDOM"


# (initial mode, cycle of modes for iterations >= 1)
_PHASE_RULES: dict[StrategyKind, tuple[Mode, tuple[Mode, ...]]] = {
    StrategyKind.HC: (Mode.HIGH, (Mode.HIGH,)),
    StrategyKind.LC: (Mode.LOW, (Mode.LOW,)),
    StrategyKind.HCLC: (Mode.HIGH, (Mode.LOW,)),
    StrategyKind.LCHC: (Mode.LOW, (Mode.HIGH,)),
    StrategyKind.RHC: (Mode.RANDOM, (Mode.HIGH,)),
    StrategyKind.RLC: (Mode.RANDOM, (Mode.LOW,)),
    StrategyKind.HLH: (Mode.HIGH, (Mode.LOW, Mode.HIGH)),
    StrategyKind.RANDOM: (Mode.RANDOM, (Mode.RANDOM,)),
}

ALL_STRATEGIES = tuple(StrategyKind)
ABLATION_STRATEGIES = (
    StrategyKind.LCHC,
    StrategyKind.HLH,
    StrategyKind.RHC,
    StrategyKind.RLC,
)


@dataclass(frozen=True)
class AcquisitionStrategy:
    """A named strategy plus its iteration -> mode rule.

    ``initial`` applies at iteration 0; iterations ``i >= 1`` cycle through
    ``subsequent``. Both default to the built-in rule for ``kind`` and can be
    overridden to try other compositions.
    """

    kind: StrategyKind
    initial: Mode | None = None
    subsequent: tuple[Mode, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        base_initial, base_subsequent = _PHASE_RULES[self.kind]
        initial = base_initial if self.initial is None else Mode(self.initial)
        subsequent = (
            base_subsequent
            if self.subsequent is None
            else tuple(Mode(m) for m in self.subsequent)
        )
        if not subsequent:
            raise ValueError("subsequent phase cycle must be nonempty")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "subsequent", subsequent)

    @property
    def is_default(self) -> bool:
        return (self.initial, self.subsequent) == _PHASE_RULES[self.kind]

    @property
    def label(self) -> str:
        if self.is_default:
            return self.kind.value
        cycle = "-".join(m.value for m in self.subsequent)
        return f"{self.kind.value}[{self.initial.value}/{cycle}]"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "initial": self.initial.value,
            "subsequent": [m.value for m in self.subsequent],
        }

    @classmethod
    def from_value(cls, value) -> "AcquisitionStrategy":
        if isinstance(value, AcquisitionStrategy):
            return value
        if isinstance(value, StrategyKind):
            return cls(value)
        if isinstance(value, str):
            return cls(StrategyKind(value.upper()))
        value = dict(value)
        unknown = set(value) - {"kind", "initial", "subsequent"}
        if unknown:
            raise ValueError(f"unknown strategy keys: {sorted(unknown)}")
        sub = value.get("subsequent")
        return cls(
            StrategyKind(str(value["kind"]).upper()),
            initial=value.get("initial"),
            subsequent=None if sub is None else tuple(sub),
        )


def phase_for(strategy: AcquisitionStrategy | StrategyKind | str, iteration: int) -> Mode:
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    strategy = AcquisitionStrategy.from_value(strategy)
    if iteration == 0:
        return strategy.initial
    return strategy.subsequent[(iteration - 1) % len(strategy.subsequent)]


def validate_probs(probs) -> np.ndarray:
    """Return ``probs`` as a float64 array after checking distribution invariants.

    Accepts a single vector of shape (K,) or a batch of shape (N, K).
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim not in (1, 2):
        raise InvalidDistributionError(f"expected 1-D or 2-D array, got shape {p.shape}")
    if p.shape[-1] < 2:
        raise InvalidDistributionError(f"need at least 2 classes, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError("non-finite probability")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidDistributionError("probability outside [0, 1]")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PROB_SUM_ATOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise InvalidDistributionError(f"probabilities do not sum to 1 (off by {worst:.3g})")
    return p


def score_hc(p) -> float | np.ndarray:
    """Max class probability. Vectorizes over a leading batch axis."""
    p = validate_probs(p)
    return p.max(axis=-1) if p.ndim == 2 else float(p.max())


def score_lc(p) -> float | np.ndarray:
    """One minus the max class probability."""
    hc = score_hc(p)
    return 1.0 - hc


def score(probs, mode: Mode) -> np.ndarray:
    """Batch scores for HIGH or LOW mode; larger means selected first."""
    mode = Mode(mode)
    if mode is Mode.HIGH:
        return np.atleast_1d(score_hc(probs))
    if mode is Mode.LOW:
        return np.atleast_1d(score_lc(probs))
    raise ValueError(f"mode {mode.value} has no confidence score")


@dataclass(frozen=True)
class SelectionBatch:
    iteration: int
    ids: np.ndarray
    scores: np.ndarray | None = None
    phase: Mode | None = None

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if np.unique(ids).size != ids.size:
            raise ValueError("selection batch ids must be unique")
        object.__setattr__(self, "ids", ids)
        if self.scores is not None:
            scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
            if scores.shape != ids.shape:
                raise ValueError("scores must match ids")
            object.__setattr__(self, "scores", scores)
        if self.phase is not None:
            object.__setattr__(self, "phase", Mode(self.phase))

    def __len__(self) -> int:
        return int(self.ids.size)


def top_k_indices(ids: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` best entries: score descending, then id ascending."""
    k = min(int(k), len(ids))
    # lexsort sorts by the last key first
    order = np.lexsort((ids, -scores))
    return order[:k]


def select_top(scores, k: int, iteration: int = 0, ids=None, phase: Mode | None = None) -> SelectionBatch:
    """Pick the ``k`` highest-scoring samples.

    ``scores`` is either a sequence of ``(sample_id, score)`` pairs or, when
    ``ids`` is given, an array of scores aligned with ``ids``.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if ids is None:
        pairs = list(scores)
        if not pairs:
            raise ValueError("scores must be nonempty")
        ids_arr = np.array([int(i) for i, _ in pairs], dtype=np.int64)
        sc = np.array([float(s) for _, s in pairs], dtype=np.float64)
    else:
        ids_arr = np.asarray(ids, dtype=np.int64)
        sc = np.asarray(scores, dtype=np.float64)
        if ids_arr.shape != sc.shape:
            raise ValueError("ids and scores must have the same shape")
        if ids_arr.size == 0:
            raise ValueError("scores must be nonempty")
    if np.unique(ids_arr).size != ids_arr.size:
        raise ValueError("sample ids must be unique")
    pos = top_k_indices(ids_arr, sc, k)
    return SelectionBatch(iteration, ids_arr[pos], sc[pos], phase)


def select_random(pool_ids: Iterable[int] | np.ndarray, k: int, seed, iteration: int = 0) -> SelectionBatch:
    """Draw ``min(k, |pool|)`` ids uniformly without replacement.

    The pool is sorted first so that the result depends only on the id set
    and the seed, not on the container's iteration order.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if isinstance(pool_ids, np.ndarray):
        pool = np.unique(pool_ids.astype(np.int64))
    else:
        pool = np.unique(np.fromiter(pool_ids, dtype=np.int64))
    if pool.size == 0:
        raise ValueError("pool must be nonempty")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=min(int(k), pool.size), replace=False)
    return SelectionBatch(iteration, chosen, None, Mode.RANDOM)


def select(
    mode: Mode,
    ids: np.ndarray,
    k: int,
    *,
    probs: np.ndarray | None = None,
    seed=None,
    iteration: int = 0,
) -> SelectionBatch:
    """Dispatch a selection for one iteration's mode."""
    mode = Mode(mode)
    if mode is Mode.RANDOM:
        return select_random(ids, k, seed, iteration)
    if probs is None:
        raise ValueError(f"{mode.value} selection needs class probabilities")
    return select_top(score(probs, mode), k, iteration, ids=ids, phase=mode)


def strategy_list(values: Sequence) -> list[AcquisitionStrategy]:
    return [AcquisitionStrategy.from_value(v) for v in values]
