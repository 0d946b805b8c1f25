"""Permutation and pooled-bootstrap redistributions of the pooled sample.

A draw assigns pooled positions to groups: group j receives assignment
positions N_{j-1}..N_j - 1 (0-based).  Permutation draws are bijections
of the pooled indices (the pool is redistributed, not resampled);
bootstrap draws are N i.i.d. uniform indices into the pool.

Seeding is counter-based: a ``SeedSpec`` plus a child path fully
determines every draw, so experiments parallelize with bit-reproducible
results independent of scheduling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from itertools import permutations as _iter_permutations

import numpy as np

from .empirical import Mode, PooledData, at_risk_process, ecdf, uncensored_subdist
from .errors import ContractError
from .stepfn import StepFn

__all__ = [
    "ResampleKind",
    "ResampleDraw",
    "SeedSpec",
    "draw_permutation",
    "draw_bootstrap",
    "all_permutations",
    "permutation_matrix",
    "bootstrap_matrix",
    "resampled_group_fns",
    "centered_process",
]


class ResampleKind(enum.Enum):
    PERMUTATION = "permutation"
    POOLED_BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class SeedSpec:
    """Deterministic seed: (master_seed, stream_id) plus a child path."""

    master_seed: int
    stream_id: int = 0
    path: tuple = ()

    def child(self, *ks) -> "SeedSpec":
        return replace(self, path=self.path + tuple(ks))

    def rng(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id, *self.path)
        )
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class ResampleDraw:
    kind: ResampleKind
    assignment: tuple

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))
        if self.kind is ResampleKind.PERMUTATION:
            if sorted(self.assignment) != list(range(len(self.assignment))):
                raise ContractError("permutation assignment must be a bijection")
        else:
            n = len(self.assignment)
            if any(not 0 <= i < n for i in self.assignment):
                raise ContractError("bootstrap assignment indices out of range")


def draw_permutation(data: PooledData, seed: SeedSpec) -> ResampleDraw:
    perm = seed.rng().permutation(data.N)
    return ResampleDraw(ResampleKind.PERMUTATION, tuple(perm))


def draw_bootstrap(data: PooledData, seed: SeedSpec) -> ResampleDraw:
    idx = seed.rng().integers(0, data.N, size=data.N)
    return ResampleDraw(ResampleKind.POOLED_BOOTSTRAP, tuple(idx))


def all_permutations(N: int) -> np.ndarray:
    """All N! permutations as an (N!, N) int array; N <= 8 only."""
    if N > 8:
        raise ContractError("exhaustive enumeration limited to N <= 8")
    return np.array(list(_iter_permutations(range(N))), dtype=np.intp)


def permutation_matrix(N: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """B independent uniform permutations, one per row."""
    out = np.tile(np.arange(N, dtype=np.intp), (B, 1))
    return rng.permuted(out, axis=1)


def bootstrap_matrix(N: int, B: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, N, size=(B, N), dtype=np.intp)


def resampled_group_fns(data: PooledData, draw: ResampleDraw, mode: Mode | None = None):
    """Group empirical functions rebuilt from a resampling draw.

    Plain mode returns a list of m ECDF StepFns; survival mode returns a
    list of m (at_risk, uncensored) pairs.  Censored pairs travel as
    atomic units.
    """
    if len(draw.assignment) != data.N:
        raise ContractError(
            f"draw length {len(draw.assignment)} does not match N={data.N}"
        )
    if mode is None:
        mode = data.mode
    out = []
    for j in range(data.m):
        sl = data.group_slice(j)
        obs = [data.pooled[i] for i in draw.assignment[sl]]
        if mode is Mode.PLAIN:
            out.append(ecdf(obs))
        else:
            out.append((at_risk_process(obs), uncensored_subdist(obs)))
    return out


def centered_process(group_fns, pooled_fn: StepFn, N: int, grid) -> np.ndarray:
    """Entry (j, k) = sqrt(N) * (group_fns[j](grid[k]) - pooled_fn(grid[k]))."""
    root = math.sqrt(N)
    return np.array(
        [[root * (f(t) - pooled_fn(t)) for t in grid] for f in group_fns],
        dtype=float,
    )
