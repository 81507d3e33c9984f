"""The built-in divide-and-conquer programs and their ground-truth oracles."""

from .base import (
    AlgorithmProgram,
    Context,
    ProgramError,
    dependency_oracle,
    oracle_missing_pairs,
    run_in_order,
    run_topological,
    serial_elision,
)
from .cholesky import cholesky_program
from .fw1d import fw1d_program
from .lcs import lcs_program
from .matmul import mm_program
from .trs import trs_program

PROGRAMS = {
    "mm": mm_program,
    "trs": trs_program,
    "cholesky": cholesky_program,
    "fw1d": fw1d_program,
    "lcs": lcs_program,
}


def get_program(name: str, n: int, base: int = 1, model: str = "nd", seed: int = 0,
                **kwargs) -> AlgorithmProgram:
    try:
        factory = PROGRAMS[name]
    except KeyError:
        raise ProgramError(f"unknown algorithm {name!r}; choose from {sorted(PROGRAMS)}")
    return factory(n, base=base, model=model, seed=seed, **kwargs)


def np_variant(program: AlgorithmProgram) -> AlgorithmProgram:
    """The same algorithm with every fire construct degraded to serial."""
    return get_program(program.name, program.n, base=program.base, model="np",
                       seed=0)
