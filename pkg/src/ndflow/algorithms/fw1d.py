"""One-dimensional Floyd-Warshall style space-time recurrence.

Table cells d(t, i) for 1 <= t, i <= n, with row 0 given, follow

    d(t, i) = d(t-1, i) (+) d(t-1, t-1)

where (+) is instantiated as an asymmetric integer mix so that any
mis-ordered execution changes the result (min/max would mask races):

    d(t, i) = (d(t-1, i) + 3 * d(t-1, t-1) + t) mod (2^31 - 1)

Two task kinds tile the space-time square: A blocks sit on the diagonal and
contain their own pivot cells; B blocks take the pivots from a separate
diagonal block.  A splits into two diagonal sub-blocks each firing its
off-diagonal neighbor (AB), the two epochs composed by ABAB; B splits into
an upper and lower row of sub-blocks composed by BBBB.  The vertical chains
(a block needs the last row of the block above) are the BB / BA / AV
patterns.
"""

from __future__ import annotations

import numpy as np

from ..core import FireRuleSet, rule
from .base import AlgorithmProgram, Context, Group, Spec, par

FW_MOD = 2**31 - 1

AB_RULES = FireRuleSet(
    "AB",
    (
        rule((1, 1), (1, 1), "AB"),
        rule((1, 1), (1, 2), "AB"),
        rule((2, 1), (2, 1), "AB"),
        rule((2, 1), (2, 2), "AB"),
    ),
)

# First epoch into second epoch: the B block feeds the next diagonal block
# (BA) and the first diagonal block feeds the B block below it (AV).
ABAB_RULES = FireRuleSet(
    "ABAB",
    (
        rule((2,), (1,), "BA"),
        rule((1,), (2,), "AV"),
    ),
)

BA_RULES = FireRuleSet(
    "BA",
    (
        rule((2, 1), (1, 1), "BA"),
        rule((2, 2), (1, 2), "BB"),
    ),
)

# Diagonal block directly above an off-diagonal block, same columns.
AV_RULES = FireRuleSet(
    "AV",
    (
        rule((2, 1), (1, 2), "AV"),
        rule((2, 2), (1, 1), "BB"),
    ),
)

BBBB_RULES = FireRuleSet(
    "BBBB",
    (
        rule((1,), (1,), "BB"),
        rule((2,), (2,), "BB"),
    ),
)

BB_RULES = FireRuleSet(
    "BB",
    (
        rule((2, 1), (1, 1), "BB"),
        rule((2, 2), (1, 2), "BB"),
    ),
)


class FwSpec(Spec):
    """A block of the space-time table: rows [t0, t0+n), columns [i0, i0+n).

    Diagonal blocks (kind A) have t0 == i0 and contain their pivots; kind B
    blocks read pivots from the diagonal block at rows [t0, t0+n).
    """

    __slots__ = ("t0", "i0", "n", "kind")

    def __init__(self, ctx: Context, n: int, t0: int, i0: int, kind: str):
        self.ctx = ctx
        self.n = n
        self.t0 = t0
        self.i0 = i0
        self.kind = kind

    @property
    def family(self):
        return self.kind

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx
        t0, i0 = self.t0, self.i0
        if self.kind == "A":
            first = Group(ctx.fire("AB"),
                          FwSpec(ctx, h, t0, i0, "A"),
                          FwSpec(ctx, h, t0, i0 + h, "B"))
            second = Group(ctx.fire("AB"),
                           FwSpec(ctx, h, t0 + h, i0 + h, "A"),
                           FwSpec(ctx, h, t0 + h, i0, "B"))
            return ctx.fire("ABAB"), first, second
        top = par(FwSpec(ctx, h, t0, i0, "B"), FwSpec(ctx, h, t0, i0 + h, "B"))
        bottom = par(FwSpec(ctx, h, t0 + h, i0, "B"), FwSpec(ctx, h, t0 + h, i0 + h, "B"))
        return ctx.fire("BBBB"), top, bottom

    def describe(self) -> str:
        return f"{self.kind}[t={self.t0} i={self.i0} n={self.n}]"

    def reads(self) -> set:
        ctx, n = self.ctx, self.n
        cells = ctx.rect("X", self.t0 - 1, self.i0, n, n)  # previous rows
        cells |= {ctx.word("X", t - 1, t - 1) for t in range(self.t0, self.t0 + n)}
        return cells

    def writes(self) -> set:
        return self.ctx.rect("X", self.t0, self.i0, self.n, self.n)

    def ops(self) -> int:
        return self.n * self.n

    def execute(self, state: dict):
        x = state["X"]
        for t in range(self.t0, self.t0 + self.n):
            pivot = x[t - 1, t - 1]
            for i in range(self.i0, self.i0 + self.n):
                x[t, i] = (x[t - 1, i] + 3 * pivot + t) % FW_MOD


def fw1d_registry() -> dict:
    return {
        "AB": AB_RULES,
        "ABAB": ABAB_RULES,
        "BA": BA_RULES,
        "AV": AV_RULES,
        "BBBB": BBBB_RULES,
        "BB": BB_RULES,
    }


def fw1d_reference(x0: np.ndarray, n: int) -> np.ndarray:
    """Direct double-loop evaluation of the recurrence."""
    x = x0.copy()
    for t in range(1, n + 1):
        pivot = x[t - 1, t - 1]
        for i in range(1, n + 1):
            x[t, i] = (x[t - 1, i] + 3 * pivot + t) % FW_MOD
    return x


def fw1d_program(n: int, base: int = 1, model: str = "nd", seed: int = 0) -> AlgorithmProgram:
    """Space-time table of side n; row 0 is the given input."""
    ctx = Context(n, base, model)
    ctx.register("X", n + 1, n + 1)
    root = FwSpec(ctx, n, 1, 1, "A")

    def make_state(state_seed: int = seed) -> dict:
        import random as _random

        rng = _random.Random(state_seed)
        x = np.zeros((n + 1, n + 1), dtype=np.int64)
        x[0, :] = [rng.randrange(1000) for _ in range(n + 1)]
        return {"X": x}

    def reference(state0: dict) -> np.ndarray:
        return fw1d_reference(state0["X"], n)

    return AlgorithmProgram(
        name="fw1d", n=n, base=base, model=model, ctx=ctx,
        registry=fw1d_registry(), root_spec=root,
        make_state=make_state, reference=reference, result="X",
    )
