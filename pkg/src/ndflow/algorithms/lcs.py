"""Longest common subsequence dynamic program over quadrant blocks.

    X(i, j) = X(i-1, j-1) + 1                     if s_i == t_j
            = max(X(i, j-1), X(i-1, j))           otherwise

with zero boundaries.  A block task consumes its top and left boundary rows
and produces its bottom row and right column; interior cells live in
per-strand scratch and are never shared, which is what gives the quadratic-
work, linear-footprint block kernel its n^2/M cache complexity.  One
recursion level runs the top-left quadrant, fires the top-right and
bottom-left quadrants (HV: one horizontal and one vertical boundary), and
those fire the bottom-right (VH).  H and V are the neighbor patterns: the
sink needs the source's last column (H) or last row (V), which recursively
involves only the two source blocks on that edge and the two sink blocks
facing them.
"""

from __future__ import annotations

import numpy as np

from ..core import FireRuleSet, rule
from .base import AlgorithmProgram, Context, Group, Spec, par, random_sequence

HV_RULES = FireRuleSet(
    "HV",
    (
        rule((), (1,), "H"),
        rule((), (2,), "V"),
    ),
)

# The composed (top-left + wings) subtree fires the bottom-right quadrant:
# the top-right wing is above it, the bottom-left wing is to its left.
VH_RULES = FireRuleSet(
    "VH",
    (
        rule((2, 1), (), "V"),
        rule((2, 2), (), "H"),
    ),
)

H_RULES = FireRuleSet(
    "H",
    (
        rule((1, 2, 1), (1, 1), "H"),
        rule((2,), (1, 2, 2), "H"),
    ),
)

V_RULES = FireRuleSet(
    "V",
    (
        rule((1, 2, 2), (1, 1), "V"),
        rule((2,), (1, 2, 1), "V"),
    ),
)


class LcsSpec(Spec):
    """Fill table block rows [i0, i0+n) x cols [j0, j0+n), 1-based."""

    __slots__ = ("i0", "j0", "n")
    family = "LCS"

    def __init__(self, ctx: Context, n: int, i0: int, j0: int):
        self.ctx = ctx
        self.n = n
        self.i0 = i0
        self.j0 = j0

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx
        i0, j0 = self.i0, self.j0
        x00 = LcsSpec(ctx, h, i0, j0)
        x01 = LcsSpec(ctx, h, i0, j0 + h)
        x10 = LcsSpec(ctx, h, i0 + h, j0)
        x11 = LcsSpec(ctx, h, i0 + h, j0 + h)
        left = Group(ctx.fire("HV"), x00, par(x01, x10))
        return ctx.fire("VH"), left, x11

    def describe(self) -> str:
        return f"LCS[i={self.i0} j={self.j0} n={self.n}]"

    def reads(self) -> set:
        ctx, n = self.ctx, self.n
        cells = ctx.rect("X", self.i0 - 1, self.j0 - 1, 1, n + 1)  # top, with corner
        cells |= ctx.rect("X", self.i0, self.j0 - 1, n, 1)  # left
        cells |= ctx.rect("S", self.i0, 0, n, 1)
        cells |= ctx.rect("T", self.j0, 0, n, 1)
        return cells

    def writes(self) -> set:
        n = self.n
        return (self.ctx.rect("X", self.i0 + n - 1, self.j0, 1, n)  # bottom row
                | self.ctx.rect("X", self.i0, self.j0 + n - 1, n, 1))  # right col

    def ops(self) -> int:
        return self.n * self.n

    def execute(self, state: dict):
        x = state["X"]
        s = state["S"]
        t = state["T"]
        n, i0, j0 = self.n, self.i0, self.j0
        # block-local table seeded from the shared boundary cells
        scratch = np.empty((n + 1, n + 1), dtype=np.int64)
        scratch[0, :] = x[i0 - 1, j0 - 1:j0 + n]
        scratch[1:, 0] = x[i0:i0 + n, j0 - 1]
        for r in range(1, n + 1):
            si = s[i0 + r - 1, 0]
            for c in range(1, n + 1):
                if si == t[j0 + c - 1, 0]:
                    scratch[r, c] = scratch[r - 1, c - 1] + 1
                else:
                    scratch[r, c] = max(scratch[r, c - 1], scratch[r - 1, c])
        x[i0 + n - 1, j0:j0 + n] = scratch[n, 1:]
        x[i0:i0 + n, j0 + n - 1] = scratch[1:, n]


def lcs_registry() -> dict:
    return {"HV": HV_RULES, "VH": VH_RULES, "H": H_RULES, "V": V_RULES}


def lcs_reference_table(s: np.ndarray, t: np.ndarray, n: int) -> np.ndarray:
    x = np.zeros((n + 1, n + 1), dtype=np.int64)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if s[i, 0] == t[j, 0]:
                x[i, j] = x[i - 1, j - 1] + 1
            else:
                x[i, j] = max(x[i, j - 1], x[i - 1, j])
    return x


def lcs_written_mask(n: int, base: int) -> np.ndarray:
    """Cells of the shared table that block boundaries actually produce."""
    mask = np.zeros((n + 1, n + 1), dtype=bool)
    for i0 in range(1, n + 1, base):
        for j0 in range(1, n + 1, base):
            mask[i0 + base - 1, j0:j0 + base] = True
            mask[i0:i0 + base, j0 + base - 1] = True
    return mask


def lcs_program(n: int, base: int = 1, model: str = "nd", seed: int = 0,
                sequences=None) -> AlgorithmProgram:
    """LCS of two length-n integer-coded sequences (index 0 unused)."""
    ctx = Context(n, base, model)
    ctx.register("X", n + 1, n + 1)
    ctx.register("S", n + 1, 1)
    ctx.register("T", n + 1, 1)
    root = LcsSpec(ctx, n, 1, 1)

    def make_state(state_seed: int = seed) -> dict:
        if sequences is not None:
            s_raw, t_raw = sequences
            s = np.concatenate([[0], np.asarray(s_raw, dtype=np.int64)])
            t = np.concatenate([[0], np.asarray(t_raw, dtype=np.int64)])
        else:
            s = np.concatenate([[0], random_sequence(n, state_seed * 2 + 1)])
            t = np.concatenate([[0], random_sequence(n, state_seed * 2 + 2)])
        return {
            "X": np.zeros((n + 1, n + 1), dtype=np.int64),
            "S": s.reshape(-1, 1),
            "T": t.reshape(-1, 1),
        }

    def reference(state0: dict) -> np.ndarray:
        return lcs_reference_table(state0["S"], state0["T"], n)

    return AlgorithmProgram(
        name="lcs", n=n, base=base, model=model, ctx=ctx,
        registry=lcs_registry(), root_spec=root,
        make_state=make_state, reference=reference, result="X",
        meta={"written_mask": lambda: lcs_written_mask(n, base)},
    )
