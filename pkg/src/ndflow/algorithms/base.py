"""Shared machinery for the built-in divide-and-conquer programs.

Each program is a generator of a spawn tree: task specs know whether they
are strands (side == base) and how they spawn one level.  Strand specs carry
exact word-level read/write sets over the program's arrays, an executable
numeric action, and an operation count.  The exact footprints power both the
brute-force dependency oracle (ground truth for the fire-rule sets) and the
cache simulator, whose miss bound is stated against footprint sizes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from ..core import PARALLEL, SERIAL, Registry
from ..drs import Expansion, expand


class ProgramError(Exception):
    pass


def is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


class Context:
    """Per-program array registry and model flag.

    Arrays are flat id spaces: word (name, r, c) -> offset + r*cols + c.
    `model` is "nd" (fire constructs active) or "np" (every fire construct
    degraded to a serial composition, the fork-join rendering).
    """

    def __init__(self, n: int, base: int, model: str = "nd"):
        if model not in ("nd", "np"):
            raise ProgramError(f"model must be 'nd' or 'np', got {model!r}")
        if not (is_pow2(n) and is_pow2(base) and base <= n):
            raise ProgramError(f"n={n} and base={base} must be powers of two, base <= n")
        self.n = n
        self.base = base
        self.model = model
        self.arrays: dict[str, tuple[int, int, int]] = {}
        self._next = 0

    def register(self, name: str, rows: int, cols: int):
        self.arrays[name] = (self._next, rows, cols)
        self._next += rows * cols

    def word(self, name: str, r: int, c: int) -> int:
        off, rows, cols = self.arrays[name]
        return off + r * cols + c

    def rect(self, name: str, r0: int, c0: int, h: int, w: int) -> set:
        off, rows, cols = self.arrays[name]
        return {off + r * cols + c for r in range(r0, r0 + h) for c in range(c0, c0 + w)}

    def tril(self, name: str, r0: int, c0: int, m: int) -> set:
        """Lower triangle (incl. diagonal) of an m x m block."""
        off, rows, cols = self.arrays[name]
        return {off + (r0 + i) * cols + (c0 + j) for i in range(m) for j in range(i + 1)}

    def fire(self, label: str) -> str:
        """Construct label under the current model: fires serialize under np."""
        if self.model == "np" and label not in (SERIAL, PARALLEL):
            return SERIAL
        return label


class Spec:
    """Base task spec: a node payload of the spawn tree."""

    __slots__ = ("ctx",)
    family = "?"

    def is_strand(self) -> bool:
        raise NotImplementedError

    def spawn(self):
        """Return (construct label, left spec, right spec)."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.family

    # strand-only interface
    def reads(self) -> set:
        raise NotImplementedError

    def writes(self) -> set:
        raise NotImplementedError

    def footprint(self) -> set:
        return self.reads() | self.writes()

    def ops(self) -> int:
        raise NotImplementedError

    def execute(self, state: dict):
        raise NotImplementedError


class Group(Spec):
    """Anonymous internal composition produced while a task unrolls."""

    __slots__ = ("label", "left", "right")

    def __init__(self, label: str, left: Spec, right: Spec):
        self.label = label
        self.left = left
        self.right = right

    def is_strand(self) -> bool:
        return False

    def spawn(self):
        return self.label, self.left, self.right

    def describe(self) -> str:
        return f"({self.label})"

    def footprint(self) -> set:  # groups never become strands
        raise ProgramError("group nodes have no kernel")


def par(left: Spec, right: Spec) -> Group:
    return Group(PARALLEL, left, right)


@dataclass
class AlgorithmProgram:
    """A spawn-tree generator plus numeric state and a reference solution.

    `make_state(seed)` builds the initial arrays; `reference(state)` returns
    the expected value of `result` after a correct execution, computed by an
    independent direct method (no task machinery).
    """

    name: str
    n: int
    base: int
    model: str
    ctx: Context
    registry: Registry
    root_spec: Spec
    make_state: callable
    reference: callable
    result: str  # name of the output array
    meta: dict = field(default_factory=dict)

    def expansion(self, seed=None, budget=10_000_000) -> Expansion:
        return expand(self, seed=seed, budget=budget)


def serial_elision(program: AlgorithmProgram, expansion: Expansion, state=None) -> dict:
    """Run every strand in left-to-right depth-first order; the correctness
    reference for all scheduled executions."""
    if state is None:
        state = program.make_state()
    tree = expansion.tree
    for s in expansion.strands:
        tree.spec[s].execute(state)
    return state


def run_in_order(program: AlgorithmProgram, expansion: Expansion, order, state=None) -> dict:
    if state is None:
        state = program.make_state()
    tree = expansion.tree
    seen = set()
    for s in order:
        tree.spec[s].execute(state)
        seen.add(s)
    if len(seen) != len(expansion.strands):
        raise ProgramError("execution order did not cover every strand")
    return state


def run_topological(program: AlgorithmProgram, expansion: Expansion, seed=0, state=None) -> dict:
    """Execute under a random topological order of the dependency DAG."""
    order = expansion.topological_order(seed=seed)
    return run_in_order(program, expansion, order, state=state)


# ---------------------------------------------------------------------------
# Ground truth: brute-force read/write-set dependencies.


def dependency_oracle(expansion: Expansion) -> set:
    """All conflicting strand pairs (a, b), a before b in serial order.

    Conflicts are RAW, WAR and WAW overlaps of the declared footprints; this
    is independent of the fire rules and is what their expansion must cover.
    """
    tree = expansion.tree
    pairs = set()
    last_writer: dict[int, int] = {}
    readers_since: dict[int, set] = {}
    for s in expansion.strands:
        spec = tree.spec[s]
        rd = spec.reads()
        wr = spec.writes()
        for w in rd:
            lw = last_writer.get(w)
            if lw is not None and lw != s:
                pairs.add((lw, s))
        for w in wr:
            for r in readers_since.get(w, ()):
                if r != s:
                    pairs.add((r, s))
            lw = last_writer.get(w)
            if lw is not None and lw != s:
                pairs.add((lw, s))
        for w in wr:
            last_writer[w] = s
            readers_since[w] = set()
        for w in rd:
            readers_since.setdefault(w, set()).add(s)
    return pairs


def oracle_missing_pairs(expansion: Expansion, oracle: set | None = None) -> set:
    """Oracle pairs not covered by the DAG's transitive closure (must be empty)."""
    if oracle is None:
        oracle = dependency_oracle(expansion)
    reach = expansion.closure_bits()
    missing = set()
    for a, b in oracle:
        if not (reach[a] >> expansion.serial_rank(b)) & 1:
            missing.add((a, b))
    return missing


def random_sequence(n: int, seed: int, alphabet: int = 4) -> np.ndarray:
    rng = random.Random(seed)
    return np.array([rng.randrange(alphabet) for _ in range(n)], dtype=np.int64)


def random_int_matrix(rows: int, cols: int, seed: int, lo=-3, hi=3) -> np.ndarray:
    rng = random.Random(seed)
    return np.array(
        [[rng.randint(lo, hi) for _ in range(cols)] for _ in range(rows)], dtype=np.float64
    )
