"""Divide-and-conquer matrix multiply task family.

C (+|-)= A.B, split into eight half-size multiplies: the four using the left
half of A's columns run first (one per quadrant of C, all four mutually
parallel), the four using the right half run second.  The two halves are
composed with the MM fire construct: each of C's quadrants is updated by
exactly one task per half, and only those same-quadrant pairs need ordering.

A read-modify-write accumulation chain onto one C word has one writer per
column block.  Rules pairing only equal positions of the two halves leave
the middle of the chain (source's second half vs sink's first half)
unordered, so the rule set carries a third, full-dependency rule closing
that gap; see RULES_ERRATA.md.  The full dependency deliberately does not
recurse (a recursive third rule multiplies arrows geometrically during
rewriting); it becomes one barrier per refinement instead.  The transposed
variant (C -= A.B^T) splits over columns of both operands and reuses the
same rule set.
"""

from __future__ import annotations

import numpy as np

from ..core import SERIAL, FireRuleSet, rule
from .base import AlgorithmProgram, Context, Group, ProgramError, Spec, par, random_int_matrix

MM_RULES = FireRuleSet(
    "MM",
    (
        rule((1,), (1,), "MM"),
        rule((2,), (2,), "MM"),
        rule((2,), (1,), SERIAL),  # completes the per-word accumulation chain
    ),
)


class MatMulSpec(Spec):
    """One multiply task: C[block] (+|-)= A[block] . B[block](^T)."""

    __slots__ = ("a", "b", "c", "n", "sign", "transpose_b")
    family = "MM"

    def __init__(self, ctx: Context, n: int, a, b, c, sign=1, transpose_b=False):
        self.ctx = ctx
        self.n = n
        self.a = a  # (array name, r0, c0)
        self.b = b
        self.c = c
        self.sign = sign
        self.transpose_b = transpose_b

    def is_strand(self) -> bool:
        return self.n <= self.ctx.base

    def _quadrant(self, blk, i, j, h):
        name, r, c = blk
        return (name, r + i * h, c + j * h)

    def spawn(self):
        h = self.n // 2
        ctx = self.ctx

        def sub(ai, ak, bk, bj, ci, cj):
            if self.transpose_b:
                # C_ij -= sum_k A(i,k) . B(j,k)^T : both operands split by column
                return MatMulSpec(
                    ctx, h,
                    self._quadrant(self.a, ai, ak, h),
                    self._quadrant(self.b, bj, bk, h),
                    self._quadrant(self.c, ci, cj, h),
                    self.sign, True,
                )
            return MatMulSpec(
                ctx, h,
                self._quadrant(self.a, ai, ak, h),
                self._quadrant(self.b, bk, bj, h),
                self._quadrant(self.c, ci, cj, h),
                self.sign, False,
            )

        def half(k):
            return par(
                par(sub(0, k, k, 0, 0, 0), sub(0, k, k, 1, 0, 1)),
                par(sub(1, k, k, 0, 1, 0), sub(1, k, k, 1, 1, 1)),
            )

        return ctx.fire("MM"), half(0), half(1)

    def describe(self) -> str:
        t = "t" if self.transpose_b else ""
        op = "-=" if self.sign < 0 else "+="
        return (f"MM{t}[{self.c[0]}({self.c[1]},{self.c[2]}) {op} "
                f"{self.a[0]}({self.a[1]},{self.a[2]}).{self.b[0]}({self.b[1]},{self.b[2]}) n={self.n}]")

    def reads(self) -> set:
        ctx, n = self.ctx, self.n
        return (ctx.rect(self.a[0], self.a[1], self.a[2], n, n)
                | ctx.rect(self.b[0], self.b[1], self.b[2], n, n)
                | ctx.rect(self.c[0], self.c[1], self.c[2], n, n))

    def writes(self) -> set:
        n = self.n
        return self.ctx.rect(self.c[0], self.c[1], self.c[2], n, n)

    def ops(self) -> int:
        return self.n ** 3

    def execute(self, state: dict):
        n = self.n
        a = state[self.a[0]][self.a[1]:self.a[1] + n, self.a[2]:self.a[2] + n]
        b = state[self.b[0]][self.b[1]:self.b[1] + n, self.b[2]:self.b[2] + n]
        c = state[self.c[0]][self.c[1]:self.c[1] + n, self.c[2]:self.c[2] + n]
        if self.transpose_b:
            c += self.sign * (a @ b.T)
        else:
            c += self.sign * (a @ b)


def mm_registry() -> dict:
    return {"MM": MM_RULES}


def mm_program(n: int, base: int = 1, model: str = "nd", seed: int = 0,
               subtract: bool = False) -> AlgorithmProgram:
    """C += A.B on n x n inputs (C -= A.B with subtract=True)."""
    ctx = Context(n, base, model)
    ctx.register("A", n, n)
    ctx.register("B", n, n)
    ctx.register("C", n, n)
    sign = -1 if subtract else 1
    root = MatMulSpec(ctx, n, ("A", 0, 0), ("B", 0, 0), ("C", 0, 0), sign=sign)

    def make_state(state_seed: int = seed) -> dict:
        return {
            "A": random_int_matrix(n, n, state_seed * 3 + 1),
            "B": random_int_matrix(n, n, state_seed * 3 + 2),
            "C": random_int_matrix(n, n, state_seed * 3 + 3),
        }

    def reference(state0: dict) -> np.ndarray:
        return state0["C"] + sign * (state0["A"] @ state0["B"])

    return AlgorithmProgram(
        name="mm", n=n, base=base, model=model, ctx=ctx,
        registry=mm_registry(), root_spec=root,
        make_state=make_state, reference=reference, result="C",
    )
