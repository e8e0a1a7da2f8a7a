"""Sine-mixture target functions and the five sequential sub-task windows."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

DOMAIN = (-5.0, 5.0)
N_SUBTASKS = 5
SAMPLES_PER_SUBTASK = 100
Y_BOUND = 0.8
MIN_RANGE = 0.4
FILTER_GRID = 2001
MAX_DRAWS = 1_000_000


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TargetFunction:
    """``y = a0 sin(r0 x + o0) + a1 sin(r1 x + o1)``."""

    a0: float
    a1: float
    r0: float
    r1: float
    o0: float
    o1: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a0 * np.sin(self.r0 * x + self.o0) + self.a1 * np.sin(self.r1 * x + self.o1)

    def evaluate(self, x: float) -> float:
        return self.a0 * math.sin(self.r0 * x + self.o0) + self.a1 * math.sin(self.r1 * x + self.o1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TargetFunction":
        return cls(**{k: float(d[k]) for k in ("a0", "a1", "r0", "r1", "o0", "o1")})


_FILTER_XS = np.linspace(*DOMAIN, FILTER_GRID)


def passes_filter(f: TargetFunction) -> bool:
    y = f(_FILTER_XS)
    hi, lo = y.max(), y.min()
    return hi <= Y_BOUND and lo >= -Y_BOUND and hi - lo >= MIN_RANGE


def draw_candidate(rng: np.random.Generator) -> TargetFunction:
    a = rng.uniform(0.0, 2.0, 2)
    r = rng.uniform(0.0, math.pi / 3, 2)
    o = rng.uniform(*DOMAIN, 2)
    return TargetFunction(a[0], a[1], r[0], r[1], o[0], o[1])


def sample_target_function(rng: np.random.Generator, max_draws: int = MAX_DRAWS) -> TargetFunction:
    for _ in range(max_draws):
        f = draw_candidate(rng)
        if passes_filter(f):
            return f
    raise SamplingError(f"no target function accepted in {max_draws} draws")


@dataclass(frozen=True)
class SubTask:
    index: int

    @property
    def window(self) -> tuple[float, float]:
        lo = DOMAIN[0] + 2.0 * self.index
        return lo, lo + 2.0

    @property
    def closed(self) -> bool:
        return self.index == N_SUBTASKS - 1

    def contains(self, x: float) -> bool:
        lo, hi = self.window
        return lo <= x < hi or (self.closed and x == hi)


SUBTASKS = tuple(SubTask(i) for i in range(N_SUBTASKS))


def sample_batch(f: TargetFunction, st: SubTask, n: int, rng: np.random.Generator):
    """``n`` points drawn uniformly from the sub-task window, as ``(xs, ys)`` arrays."""
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    lo, hi = st.window
    xs = rng.uniform(lo, hi, n)
    return xs, f(xs)


def full_function_grid(f: TargetFunction, n_points: int):
    if n_points < 2:
        raise ValueError(f"grid needs at least 2 points, got {n_points}")
    xs = np.linspace(*DOMAIN, n_points)
    return xs, f(xs)


class TrajectoryHistory:
    """Append-only record of the samples seen for the current target function."""

    def __init__(self):
        self._xs: list[float] = []
        self._ys: list[float] = []

    def extend(self, xs, ys) -> None:
        self._xs.extend(float(x) for x in xs)
        self._ys.extend(float(y) for y in ys)

    def append(self, x: float, y: float) -> None:
        self._xs.append(float(x))
        self._ys.append(float(y))

    def clear(self) -> None:
        self._xs.clear()
        self._ys.clear()

    def __len__(self) -> int:
        return len(self._xs)

    def arrays(self):
        return np.array(self._xs), np.array(self._ys)
