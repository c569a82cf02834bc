"""Per-hop stopping probabilities and their standard initialisers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

#: lower clamp for every stopping probability
ALPHA_FLOOR = 1e-4
DEFAULT_L = 15


@dataclass(frozen=True, eq=False)
class Schedule:
    """Stopping probabilities ``alpha_0 .. alpha_L``.

    ``alpha_k`` is the conditional probability that a walk still running at
    hop ``k`` stops there. Walks that survive hop ``L`` are discarded.
    """

    alphas: np.ndarray
    init: str = "custom"

    def __post_init__(self):
        a = np.array(self.alphas, dtype=np.float64).ravel()
        if a.size < 2:
            raise ValueError("a schedule needs at least two hops (L >= 1)")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite stopping probability")
        a = np.clip(a, ALPHA_FLOOR, 1.0)
        a.flags.writeable = False
        object.__setattr__(self, "alphas", a)

    @property
    def L(self) -> int:
        return self.alphas.size - 1

    @property
    def alpha_min(self) -> float:
        return float(self.alphas.min())

    def stop_masses(self) -> np.ndarray:
        """``phi(l) = alpha_l * prod_{k<l} (1 - alpha_k)`` for every hop."""
        survive = np.concatenate([[1.0], np.cumprod(1.0 - self.alphas)[:-1]])
        return self.alphas * survive

    def tail_mass(self) -> float:
        """Probability that a walk is still running after hop ``L``."""
        return float(np.prod(1.0 - self.alphas))

    def replace(self, alphas, init: str | None = None) -> "Schedule":
        return Schedule(alphas, self.init if init is None else init)

    def __eq__(self, other):
        return isinstance(other, Schedule) and np.array_equal(self.alphas, other.alphas)

    def __repr__(self):
        return f"Schedule(L={self.L}, init={self.init!r}, alphas={np.array2string(self.alphas, precision=4)})"


def stop_mass(s: Schedule, l: int) -> float:
    if not 0 <= l <= s.L:
        raise IndexError(f"hop {l} outside 0..{s.L}")
    return float(s.alphas[l] * np.prod(1.0 - s.alphas[:l]))


def _survival(kind: str, param: float | None, L: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(L + 1)
    if kind in ("geometric", "poisson") and param is None:
        raise ValueError(f"{kind} initialization needs a parameter, e.g. {kind}:0.5")
    if kind == "geometric":
        a = float(param)
        if not 0 < a < 1:
            raise ValueError("geometric parameter must lie in (0, 1)")
        return a * (1 - a) ** k, (1 - a) ** k
    if kind == "poisson":
        t = float(param)
        if t <= 0:
            raise ValueError("poisson rate must be positive")
        # survival before hop k is P(X >= k) = sf(k - 1)
        return stats.poisson.pmf(k, t), stats.poisson.sf(k - 1, t)
    if kind == "uniform":
        return np.full(L + 1, 1.0 / (L + 1)), (L + 1 - k) / (L + 1)
    raise ValueError(f"unknown distribution {kind!r}")


def init_schedule(kind: str, param: float | None = None, L: int = DEFAULT_L) -> Schedule:
    """Schedule whose stop-hop distribution matches ``kind``.

    ``kind`` is ``"geometric"`` (param = alpha), ``"poisson"`` (param = t) or
    ``"uniform"`` over hops ``0..L``. Each ``alpha_k`` is the hazard
    ``phi(k) / P(stop hop >= k)``, clamped into ``[ALPHA_FLOOR, 1]``; once the
    remaining mass is exhausted every later alpha is 1.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    phi, surv = _survival(kind, param, L)
    alphas = np.ones(L + 1)
    for k in range(L + 1):
        if surv[k] <= 0:
            break
        alphas[k] = min(phi[k] / surv[k], 1.0)
    label = kind if param is None else f"{kind}({param:g})"
    return Schedule(alphas, init=label)


def parse_init(spec: str, L: int = DEFAULT_L) -> Schedule:
    """Build a schedule from ``"poisson:5"``, ``"geometric:0.5"`` or ``"uniform"``."""
    kind, _, arg = spec.strip().partition(":")
    return init_schedule(kind.strip(), float(arg) if arg else None, L)


def save_schedule(s: Schedule, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"L={s.L}\n")
        for a in s.alphas:
            fh.write(f"{a:.17g}\n")


def load_schedule(path) -> Schedule:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("L="):
        raise ValueError(f"{path}: first line must be 'L=<int>'")
    L = int(lines[0][2:])
    alphas = [float(x) for x in lines[1:]]
    if len(alphas) != L + 1:
        raise ValueError(f"{path}: expected {L + 1} values, found {len(alphas)}")
    return Schedule(alphas, init=f"file:{Path(path).name}")

