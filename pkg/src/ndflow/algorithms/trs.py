"""Triangular system solver: T.X = B with T lower triangular, X over B.

One level of recursion splits the unknowns into four quadrants:

    X00 = solve(T00, B00)      X01 = solve(T00, B01)
    B10 -= T10.X00             B11 -= T10.X01
    X10 = solve(T11, B10)      X11 = solve(T11, B11)

The two solve/update pairs run in parallel, each pair composed by the TM
fire construct (the multiply reads the solve's output as its second operand)
and the trailing solves hang off the updates through 2TM2T / MT.  MT chains
a multiply's output block into the next solve (or into the next multiply
updating the same block, which is plain MM ordering).
"""

from __future__ import annotations

import numpy as np

from ..core import FireRuleSet, rule
from .base import AlgorithmProgram, Context, Group, Spec, par, random_int_matrix
from .matmul import MM_RULES, MatMulSpec

TM_RULES = FireRuleSet(
    "TM",
    (
        rule((1, 1, 1), (1, 1, 1), "TM"),
        rule((1, 1, 1), (1, 2, 1), "TM"),
        rule((1, 2, 1), (1, 1, 2), "TM"),
        rule((1, 2, 1), (1, 2, 2), "TM"),
        rule((2, 1), (2, 1, 1), "TM"),
        rule((2, 1), (2, 2, 1), "TM"),
        rule((2, 2), (2, 1, 2), "TM"),
        rule((2, 2), (2, 2, 2), "TM"),
    ),
)

TWO_TM_TWO_T_RULES = FireRuleSet(
    "2TM2T",
    (
        rule((1, 2), (1,), "MT"),
        rule((2, 2), (2,), "MT"),
    ),
)

# The multiply's output is the right-hand side of the sink solve.  Source
# atoms are the four final writers (second-half quadrant tasks); sinks are
# the first reader of each quadrant: the matching solve for the quadrants the
# sink solves directly, the matching C-accumulator for the rest.
MT_RULES = FireRuleSet(
    "MT",
    (
        rule((2, 1, 1), (1, 1, 1), "MT"),
        rule((2, 1, 2), (1, 2, 1), "MT"),
        rule((2, 2, 1), (1, 1, 2), "MM"),
        rule((2, 2, 2), (1, 2, 2), "MM"),
    ),
)


class TrsSpec(Spec):
    """Solve T[block] . X = B[block] in place over B."""

    __slots__ = ("t", "b", "n")
    family = "TRS"

    def __init__(self, ctx: Context, n: int, t, b):
        self.ctx = ctx
        self.n = n
        self.t = t
        self.b = b

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx
        tn, tr, tc = self.t
        bn, br, bc = self.b
        t00 = (tn, tr, tc)
        t10 = (tn, tr + h, tc)
        t11 = (tn, tr + h, tc + h)
        b00 = (bn, br, bc)
        b01 = (bn, br, bc + h)
        b10 = (bn, br + h, bc)
        b11 = (bn, br + h, bc + h)

        pair0 = Group(ctx.fire("TM"),
                      TrsSpec(ctx, h, t00, b00),
                      MatMulSpec(ctx, h, t10, b00, b10, sign=-1))
        pair1 = Group(ctx.fire("TM"),
                      TrsSpec(ctx, h, t00, b01),
                      MatMulSpec(ctx, h, t10, b01, b11, sign=-1))
        tail = par(TrsSpec(ctx, h, t11, b10), TrsSpec(ctx, h, t11, b11))
        return ctx.fire("2TM2T"), par(pair0, pair1), tail

    def describe(self) -> str:
        return (f"TRS[{self.t[0]}({self.t[1]},{self.t[2]}) \\ "
                f"{self.b[0]}({self.b[1]},{self.b[2]}) n={self.n}]")

    def reads(self) -> set:
        return (self.ctx.tril(self.t[0], self.t[1], self.t[2], self.n)
                | self.ctx.rect(self.b[0], self.b[1], self.b[2], self.n, self.n))

    def writes(self) -> set:
        return self.ctx.rect(self.b[0], self.b[1], self.b[2], self.n, self.n)

    def ops(self) -> int:
        n = self.n
        return n * (n * (n - 1)) // 2 + n * n  # mults plus one divide per entry

    def execute(self, state: dict):
        n = self.n
        t = state[self.t[0]][self.t[1]:self.t[1] + n, self.t[2]:self.t[2] + n]
        b = state[self.b[0]][self.b[1]:self.b[1] + n, self.b[2]:self.b[2] + n]
        if np.any(np.diagonal(t) == 0):
            raise np.linalg.LinAlgError("singular diagonal block in triangular solve")
        b[:] = np.linalg.solve(np.tril(t), b)


def trs_registry() -> dict:
    return {"TM": TM_RULES, "2TM2T": TWO_TM_TWO_T_RULES, "MT": MT_RULES, "MM": MM_RULES}


def trs_program(n: int, base: int = 1, model: str = "nd", seed: int = 0) -> AlgorithmProgram:
    """Lower-triangular solve on an n x n system with n right-hand sides."""
    ctx = Context(n, base, model)
    ctx.register("T", n, n)
    ctx.register("B", n, n)
    root = TrsSpec(ctx, n, ("T", 0, 0), ("B", 0, 0))

    def make_state(state_seed: int = seed) -> dict:
        t = np.tril(random_int_matrix(n, n, state_seed * 3 + 1))
        np.fill_diagonal(t, np.abs(np.diagonal(t)) + n)  # well conditioned
        return {"T": t, "B": random_int_matrix(n, n, state_seed * 3 + 2)}

    def reference(state0: dict) -> np.ndarray:
        return np.linalg.solve(np.tril(state0["T"]), state0["B"])

    return AlgorithmProgram(
        name="trs", n=n, base=base, model=model, ctx=ctx,
        registry=trs_registry(), root_spec=root,
        make_state=make_state, reference=reference, result="B",
    )
