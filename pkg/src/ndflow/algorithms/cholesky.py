"""Cholesky factorization A = L.L^T, L written over A's lower triangle.

One recursion level:

    L00 = chol(A00)
    L10 = A10 . L00^-T          (right-looking triangular solve, over A10)
    A11 -= L10 . L10^T          (symmetric trailing update, full square)
    L11 = chol(A11)

composed as (CHOL -CT-> RSOLVE) -CTMC-> (SYRK -MC-> CHOL).  The right solve
family RSOLVE (X.T^T = B, X over B) mirrors the left-looking solver: its
internal multiply reads the solve output as its *first* operand (rule set
TMA) while CT's cross dependencies read the factor as the *second*,
transposed operand (TMB); TMAB applies both patterns to one arrow pair, and
TMS is the solve-into-trailing-update pattern where the sink reads the block
as both operands.
"""

from __future__ import annotations

import numpy as np

from ..core import FireRuleSet, rule
from .base import AlgorithmProgram, Context, Group, Spec, par, random_int_matrix
from .matmul import MM_RULES, MatMulSpec

CT_RULES = FireRuleSet(
    "CT",
    (
        rule((1, 1), (1, 1, 1), "CT"),
        rule((1, 1), (1, 2, 1), "CT"),
        rule((1, 2), (1, 1, 2), "TMB"),
        rule((1, 2), (1, 2, 2), "TMB"),
        rule((2, 2), (2, 1), "CT"),
        rule((2, 2), (2, 2), "CT"),
    ),
)

CTMC_RULES = FireRuleSet("CTMC", (rule((2,), (1,), "TMS"),))

# Solve output read as the multiply's first operand (the un-transposed one).
TMA_RULES = FireRuleSet(
    "TMA",
    (
        rule((1, 1, 1), (1, 1, 1), "TMA"),
        rule((1, 1, 1), (1, 1, 2), "TMA"),
        rule((1, 2, 1), (1, 2, 1), "TMA"),
        rule((1, 2, 1), (1, 2, 2), "TMA"),
        rule((2, 1), (2, 1, 1), "TMA"),
        rule((2, 1), (2, 1, 2), "TMA"),
        rule((2, 2), (2, 2, 1), "TMA"),
        rule((2, 2), (2, 2, 2), "TMA"),
    ),
)

# Solve output read as the multiply's second (transposed) operand.
TMB_RULES = FireRuleSet(
    "TMB",
    (
        rule((1, 1, 1), (1, 1, 1), "TMB"),
        rule((1, 1, 1), (1, 2, 1), "TMB"),
        rule((1, 2, 1), (1, 1, 2), "TMB"),
        rule((1, 2, 1), (1, 2, 2), "TMB"),
        rule((2, 1), (2, 1, 1), "TMB"),
        rule((2, 1), (2, 2, 1), "TMB"),
        rule((2, 2), (2, 1, 2), "TMB"),
        rule((2, 2), (2, 2, 2), "TMB"),
    ),
)

# Both patterns between the same endpoints (sink reads the block twice).
TMAB_RULES = FireRuleSet(
    "TMAB",
    (
        rule((), (), "TMA"),
        rule((), (), "TMB"),
    ),
)

# Solve output feeding a symmetric update that reads it as both operands.
TMS_RULES = FireRuleSet(
    "TMS",
    (
        rule((1, 1, 1), (1, 1, 1), "TMAB"),
        rule((1, 1, 1), (1, 1, 2), "TMA"),
        rule((1, 1, 1), (1, 2, 1), "TMB"),
        rule((1, 2, 1), (1, 1, 2), "TMB"),
        rule((1, 2, 1), (1, 2, 1), "TMA"),
        rule((1, 2, 1), (1, 2, 2), "TMAB"),
        rule((2, 1), (2, 1, 1), "TMAB"),
        rule((2, 1), (2, 1, 2), "TMA"),
        rule((2, 1), (2, 2, 1), "TMB"),
        rule((2, 2), (2, 1, 2), "TMB"),
        rule((2, 2), (2, 2, 1), "TMA"),
        rule((2, 2), (2, 2, 2), "TMAB"),
    ),
)

# Trailing update's final quadrant writers into the factorization's first
# touchers of each quadrant; the upper-right quadrant is written but never
# read again.  The sink's own trailing update accumulates into the bottom
# right quadrant before the sub-factorization reads it, hence the MM rule.
MC_RULES = FireRuleSet(
    "MC",
    (
        rule((2, 1, 1), (1, 1), "MC"),
        rule((2, 2, 1), (1, 2), "MTR"),
        rule((2, 2, 2), (2, 1), "MM"),
        rule((2, 2, 2), (2, 2), "MC"),
    ),
)

# Multiply output read as a right solve's right-hand side.
MTR_RULES = FireRuleSet(
    "MTR",
    (
        rule((2, 1, 1), (1, 1, 1), "MTR"),
        rule((2, 1, 2), (1, 1, 2), "MM"),
        rule((2, 2, 1), (1, 2, 1), "MTR"),
        rule((2, 2, 2), (1, 2, 2), "MM"),
    ),
)

RSOLVE_TAIL_RULES = FireRuleSet(
    "2TM2T",
    (
        rule((1, 2), (1,), "MTR"),
        rule((2, 2), (2,), "MTR"),
    ),
)


class RightSolveSpec(Spec):
    """Solve X . T^T = B (T lower triangular) in place over B."""

    __slots__ = ("t", "b", "n")
    family = "RSOLVE"

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

        # column block 0 solves, then B's column block 1 -= X0 . T10^T
        pair0 = Group(ctx.fire("TMA"),
                      RightSolveSpec(ctx, h, t00, b00),
                      MatMulSpec(ctx, h, b00, t10, b01, sign=-1, transpose_b=True))
        pair1 = Group(ctx.fire("TMA"),
                      RightSolveSpec(ctx, h, t00, b10),
                      MatMulSpec(ctx, h, b10, t10, b11, sign=-1, transpose_b=True))
        tail = par(RightSolveSpec(ctx, h, t11, b01), RightSolveSpec(ctx, h, t11, b11))
        return ctx.fire("2TM2T"), par(pair0, pair1), tail

    def describe(self) -> str:
        return (f"RSOLVE[{self.b[0]}({self.b[1]},{self.b[2]}) / "
                f"{self.t[0]}({self.t[1]},{self.t[2]})^T n={self.n}]")

    def reads(self) -> set:
        return (self.ctx.tril(self.t[0], self.t[1], self.t[2], self.n)
                | self.ctx.rect(self.b[0], self.b[1], self.b[2], self.n, self.n))

    def writes(self) -> set:
        return self.ctx.rect(self.b[0], self.b[1], self.b[2], self.n, self.n)

    def ops(self) -> int:
        n = self.n
        return n * (n * (n - 1)) // 2 + n * n

    def execute(self, state: dict):
        n = self.n
        t = state[self.t[0]][self.t[1]:self.t[1] + n, self.t[2]:self.t[2] + n]
        b = state[self.b[0]][self.b[1]:self.b[1] + n, self.b[2]:self.b[2] + n]
        if np.any(np.diagonal(t) == 0):
            raise np.linalg.LinAlgError("singular diagonal block in triangular solve")
        b[:] = np.linalg.solve(np.tril(t), b.T).T


class SyrkSpec(Spec):
    """Symmetric trailing update C -= P . P^T over the full square block."""

    __slots__ = ("p", "c", "n")
    family = "SYRK"

    def __init__(self, ctx: Context, n: int, p, c):
        self.ctx = ctx
        self.n = n
        self.p = p
        self.c = c

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx
        pn, pr, pc = self.p
        cn, cr, cc = self.c

        def pq(i, k):
            return (pn, pr + i * h, pc + k * h)

        def cq(i, j):
            return (cn, cr + i * h, cc + j * h)

        def half(k):
            return par(
                par(MatMulSpec(ctx, h, pq(0, k), pq(0, k), cq(0, 0), -1, True),
                    MatMulSpec(ctx, h, pq(0, k), pq(1, k), cq(0, 1), -1, True)),
                par(MatMulSpec(ctx, h, pq(1, k), pq(0, k), cq(1, 0), -1, True),
                    MatMulSpec(ctx, h, pq(1, k), pq(1, k), cq(1, 1), -1, True)),
            )

        return ctx.fire("MM"), half(0), half(1)

    def describe(self) -> str:
        return (f"SYRK[{self.c[0]}({self.c[1]},{self.c[2]}) -= "
                f"{self.p[0]}({self.p[1]},{self.p[2]}).^T n={self.n}]")

    def reads(self) -> set:
        return (self.ctx.rect(self.p[0], self.p[1], self.p[2], self.n, self.n)
                | self.ctx.rect(self.c[0], self.c[1], self.c[2], self.n, self.n))

    def writes(self) -> set:
        return self.ctx.rect(self.c[0], self.c[1], self.c[2], self.n, self.n)

    def ops(self) -> int:
        return self.n ** 3

    def execute(self, state: dict):
        n = self.n
        p = state[self.p[0]][self.p[1]:self.p[1] + n, self.p[2]:self.p[2] + n]
        c = state[self.c[0]][self.c[1]:self.c[1] + n, self.c[2]:self.c[2] + n]
        c -= p @ p.T


class CholeskySpec(Spec):
    """Factor A[block] = L.L^T, L over the lower triangle."""

    __slots__ = ("a", "n")
    family = "CHOL"

    def __init__(self, ctx: Context, n: int, a):
        self.ctx = ctx
        self.n = n
        self.a = a

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx
        an, ar, ac = self.a
        a00 = (an, ar, ac)
        a10 = (an, ar + h, ac)
        a11 = (an, ar + h, ac + h)
        left = Group(ctx.fire("CT"),
                     CholeskySpec(ctx, h, a00),
                     RightSolveSpec(ctx, h, a00, a10))
        right = Group(ctx.fire("MC"),
                      SyrkSpec(ctx, h, a10, a11),
                      CholeskySpec(ctx, h, a11))
        return ctx.fire("CTMC"), left, right

    def describe(self) -> str:
        return f"CHOL[{self.a[0]}({self.a[1]},{self.a[2]}) n={self.n}]"

    def reads(self) -> set:
        return self.ctx.tril(self.a[0], self.a[1], self.a[2], self.n)

    def writes(self) -> set:
        return self.ctx.tril(self.a[0], self.a[1], self.a[2], self.n)

    def ops(self) -> int:
        n = self.n
        return n ** 3 // 6 + n * n  # multiply count plus divides/roots

    def execute(self, state: dict):
        n = self.n
        a = state[self.a[0]][self.a[1]:self.a[1] + n, self.a[2]:self.a[2] + n]
        sym = np.tril(a) + np.tril(a, -1).T
        low = np.tril_indices(n)
        a[low] = np.linalg.cholesky(sym)[low]


def cholesky_registry() -> dict:
    return {
        "CT": CT_RULES,
        "CTMC": CTMC_RULES,
        "TMA": TMA_RULES,
        "TMB": TMB_RULES,
        "TMAB": TMAB_RULES,
        "TMS": TMS_RULES,
        "MC": MC_RULES,
        "MTR": MTR_RULES,
        "2TM2T": RSOLVE_TAIL_RULES,
        "MM": MM_RULES,
    }


def cholesky_program(n: int, base: int = 1, model: str = "nd", seed: int = 0) -> AlgorithmProgram:
    """Cholesky factorization of a random SPD matrix G.G^T + n.I."""
    ctx = Context(n, base, model)
    ctx.register("A", n, n)
    root = CholeskySpec(ctx, n, ("A", 0, 0))

    def make_state(state_seed: int = seed) -> dict:
        g = random_int_matrix(n, n, state_seed * 3 + 1)
        return {"A": g @ g.T + n * np.eye(n)}

    def reference(state0: dict) -> np.ndarray:
        return np.linalg.cholesky(state0["A"])

    return AlgorithmProgram(
        name="cholesky", n=n, base=base, model=model, ctx=ctx,
        registry=cholesky_registry(), root_spec=root,
        make_state=make_state, reference=reference, result="A",
    )
