"""Complexity metrics over expanded programs.

Work and span are the classic DAG measures.  The locality measures slice
the spawn tree at a cache-size parameter M: decompose it into *M-maximal*
subtasks (footprint at most M, parent larger) held together by *glue*
nodes.  Parallel cache complexity Q*(t;M) charges each maximal subtree its
full footprint once plus a constant per glue node, and is an order-of-
execution-independent bound on misses for any scheduler that pins such
tasks to an M-sized cache.

Effective cache complexity Q^(t;M,alpha) additionally prices load balance
on a machine whose fan-outs grow at most like (cache ratio)^alpha.  With
maximal tasks as base cases (Q^ = Q* there), the task's *effective depth*
ceil(Q^/S^alpha) is the larger of a work term, total complexity spread over
S^alpha processors, and a depth term, the heaviest chain of maximal tasks
under the dependency edges.  The largest alpha at which Q^ stays within a
constant factor of Q* over a range of M is the program's parallelizability:
the machine-parallelism budget it can productively absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .drs import Expansion


@dataclass
class WorkSpan:
    work: float
    span: float


def strand_costs(expansion: Expansion, mode: str = "unit") -> dict:
    """Per-strand costs: "unit" (1 per strand) or "ops" (kernel op counts)."""
    tree = expansion.tree
    if mode == "unit":
        return {s: 1 for s in expansion.strands}
    if mode == "ops":
        return {s: tree.spec[s].ops() for s in expansion.strands}
    raise ValueError(f"unknown cost mode {mode!r}")


def work_span(expansion: Expansion, costs="unit") -> WorkSpan:
    """Total cost and max-weight path of the strand DAG (barriers cost 0)."""
    if isinstance(costs, str):
        costs = strand_costs(expansion, costs)
    order = expansion.topological_order_all()
    succs = expansion.successors()
    best: dict = {}
    for node in reversed(order):
        down = max((best[t] for t in succs[node]), default=0)
        best[node] = down + (0 if node in expansion.barriers else costs[node])
    work = sum(costs[s] for s in expansion.strands)
    span = max((best[s] for s in expansion.strands), default=0)
    return WorkSpan(work=work, span=span)


@dataclass
class PccReport:
    M: int
    maximal_tasks: list  # (tree node id, size), in preorder
    glue_count: int
    glue_overhead: float
    qstar: float
    strand_home: dict = field(repr=False)  # strand id -> its maximal task node

    @property
    def maximal_size_sum(self):
        return sum(s for _, s in self.maximal_tasks)


def maximal_decomposition(expansion: Expansion, M: float, glue_overhead: float = 1.0) -> PccReport:
    """Unique split of the spawn tree into M-maximal subtasks plus glue.

    A node roots a maximal subtask when its footprint is at most M and its
    parent's exceeds M (the root counts as maximal when it fits).  Strands
    larger than M are glue leaves: no cache of size M can pin them.
    """
    expansion.compute_sizes()
    tree = expansion.tree
    maximal = []
    glue = 0
    home: dict = {}
    stack = [0]
    while stack:
        node = stack.pop()
        if tree.size[node] <= M:
            maximal.append((node, tree.size[node]))
            for s in tree.leaves_under(node):
                home[s] = node
            continue
        glue += 1
        kids = tree.children[node]
        if kids is not None:
            stack.append(kids[1])
            stack.append(kids[0])
        else:
            home[node] = node  # oversized strand: its own (unpinnable) home
    maximal.sort()
    qstar = float(sum(s for _, s in maximal)) + glue * glue_overhead
    return PccReport(M=M, maximal_tasks=maximal, glue_count=glue,
                     glue_overhead=glue_overhead, qstar=qstar, strand_home=home)


def condensed_dag(expansion: Expansion, home: dict):
    """Dependency edges between maximal tasks implied by the strand DAG."""
    edges = set()
    for s, t in expansion.edges:
        a, b = home[s], home[t]
        if a != b:
            edges.add((a, b))
    for ins, outs in expansion.barriers.values():
        in_homes = {home[s] for s in ins}
        out_homes = {home[t] for t in outs}
        for a in in_homes:
            for b in out_homes:
                if a != b:
                    edges.add((a, b))
    return edges


def _longest_path(nodes, edges, weight) -> float:
    succs = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for a, b in edges:
        succs[a].append(b)
        indeg[b] += 1
    frontier = [n for n in nodes if indeg[n] == 0]
    order = []
    while frontier:
        n = frontier.pop()
        order.append(n)
        for t in succs[n]:
            indeg[t] -= 1
            if indeg[t] == 0:
                frontier.append(t)
    if len(order) != len(nodes):
        raise ValueError("condensed dependency graph has a cycle")
    best: dict = {}
    for n in reversed(order):
        best[n] = weight(n) + max((best[t] for t in succs[n]), default=0)
    return max(best.values(), default=0)


@dataclass
class EccReport:
    M: int
    alpha: float
    qstar: float
    qhat: float
    dominant: str  # "depth" | "work" | "base"
    depth_term: float
    work_term: float
    effective_depth: float


def ecc(expansion: Expansion, M: float, alpha: float, glue_overhead: float = 1.0) -> EccReport:
    """Effective cache complexity at cache size M and parallelism alpha.

    Maximal tasks are base cases with Q^ = Q* = footprint.  The chain
    maximization is a max-weight path over the condensed dependency DAG,
    with node weight ceil(S_i / S_i^alpha); the work term spreads the summed
    base complexities over S(root)^alpha.
    """
    expansion.compute_sizes()
    tree = expansion.tree
    root_size = tree.size[0]
    pcc = maximal_decomposition(expansion, M, glue_overhead)
    if root_size <= M:
        ed = math.ceil(root_size / root_size**alpha)
        return EccReport(M=M, alpha=alpha, qstar=pcc.qstar, qhat=float(root_size),
                         dominant="base", depth_term=ed, work_term=ed, effective_depth=ed)
    nodes = [n for n, _ in pcc.maximal_tasks]
    edges = condensed_dag(expansion, pcc.strand_home)

    def weight(n):
        s = tree.size[n]
        return math.ceil(s / s**alpha) if s > 0 else 0

    depth_term = _longest_path(nodes, edges, weight)
    work_term = math.ceil(pcc.maximal_size_sum / root_size**alpha)
    effective_depth = max(depth_term, work_term)
    qhat = root_size**alpha * effective_depth
    dominant = "depth" if depth_term >= work_term else "work"
    return EccReport(M=M, alpha=alpha, qstar=pcc.qstar, qhat=qhat, dominant=dominant,
                     depth_term=depth_term, work_term=work_term,
                     effective_depth=effective_depth)


@dataclass
class ParallelizabilityEstimate:
    alpha_max: float
    c_u: float
    m_u: float
    tested_m: list
    binding: tuple | None  # first failing (alpha, M, qhat, qstar), if any


def estimate_alpha_max(expansion: Expansion, m_grid, alpha_grid=None, c_u: float = 4.0,
                       m_u: float = 64.0, glue_overhead: float = 1.0) -> ParallelizabilityEstimate:
    """Largest grid alpha with Q^(M) <= c_u * Q*(M) at every tested M > m_u."""
    if alpha_grid is None:
        alpha_grid = [round(0.05 * i, 2) for i in range(0, 31)]  # 0 .. 1.5
    ms = [m for m in m_grid if m > m_u]
    if not ms:
        raise ValueError(f"no grid M exceeds m_u={m_u}")
    alpha_max = 0.0
    binding = None
    for alpha in sorted(alpha_grid):
        bad = None
        for m in ms:
            rep = ecc(expansion, m, alpha, glue_overhead)
            if rep.qhat > c_u * rep.qstar:
                bad = (alpha, m, rep.qhat, rep.qstar)
                break
        if bad is None:
            alpha_max = alpha
        else:
            binding = bad
            break
    return ParallelizabilityEstimate(alpha_max=alpha_max, c_u=c_u, m_u=m_u,
                                     tested_m=list(ms), binding=binding)


# ---------------------------------------------------------------------------
# Closed-form effective-complexity evaluators for the two matrix kernels,
# under the simplifying assumption that the footprint is a power-of-two
# multiple of M.  `c` is the per-level constant left free in the derivation.
# The geometric series bottoms out at an M-sized task, whose effective
# complexity equals its footprint M ("pcc" base).  The "scaled" base M^alpha
# folds the footprint's alpha-power away, matching a derivation that carries
# the S^alpha normalization into the base case; both are exposed.


def _check_pow2_multiple(space: float, M: float):
    ratio = space / M
    k = round(math.log2(ratio))
    if ratio < 1 or abs(ratio - 2**k) > 1e-9:
        raise ValueError(f"footprint {space} must be a power-of-two multiple of M={M}")


def closed_form_mm_ecc(N: float, M: float, alpha: float, c: float = 1.0,
                       base: str = "pcc") -> float:
    """Effective complexity of the fork-join eight-way multiply recursion.

    N is the per-matrix word count (n^2); the task footprint is 3N.
    Solves Q^(3N) = c*(3N)^alpha + 8*Q^(3N/4) down to footprint M.
    """
    space = 3.0 * N
    _check_pow2_multiple(space, M)
    if alpha >= 1.5:
        raise ValueError("alpha must be below the work exponent 1.5")
    if base == "pcc":
        base_term = space**1.5 / M**0.5
    elif base == "scaled":
        base_term = space**1.5 / M**(1.5 - alpha)
    else:
        raise ValueError(f"unknown base {base!r}")
    if space <= M:
        return base_term
    coef = 12.0**alpha / (8.0 * 3.0**alpha - 12.0**alpha)
    return c * coef * (space**1.5 / M**(1.5 - alpha) - N**alpha) + base_term


def closed_form_trs_ecc(N: float, M: float, alpha: float, c: float = 1.0,
                        k_mm: float = 1.0, base: str = "pcc") -> float:
    """Effective complexity of the fork-join triangular-solve recursion.

    N is the right-hand-side word count (n^2); the task footprint is 3N/2
    (triangle plus right-hand side).  Evaluates the level sum of

        Q^(s) = c*s^alpha + 2*max(4^alpha, 2)*Q^(s/4) + 2*k_mm*Q^_mm(s/2)

    down to an M-sized solve (requires s a power-of-four multiple of M).
    The fully expanded one-line form of this sum drops the geometric-series
    denominators and turns negative for small alpha; see the ledger of
    closed_form_trs_ecc_literal, kept for reference.
    """
    space = 1.5 * N
    levels = math.log(space / M, 4)
    if space < M or abs(levels - round(levels)) > 1e-9:
        raise ValueError(f"footprint {space} must be a power-of-four multiple of M={M}")
    levels = round(levels)
    if levels == 0:
        return float(M) if base == "pcc" else M**alpha
    growth = 2.0 * max(4.0**alpha, 2.0)
    total = 0.0
    for k in range(levels):
        sk = space / 4.0**k
        total += growth**k * c * sk**alpha
        mm_space = sk / 2.0  # the two updates at this level are half-side multiplies
        if mm_space >= M:
            qm = closed_form_mm_ecc(N=mm_space / 3.0, M=M, alpha=alpha, c=c, base=base)
        else:
            qm = mm_space
        total += growth**k * 2.0 * k_mm * qm
    total += growth**levels * (M if base == "pcc" else M**alpha)
    return total


def closed_form_trs_ecc_literal(N: float, M: float, alpha: float, c: float = 1.0,
                                k_mm: float = 1.0) -> float:
    """The fully simplified one-line triangular-solve expression, verbatim.

    Its geometric sums are collapsed without the 1/(ratio-1) denominators,
    so it under-approximates badly (even negatively) away from alpha = 1;
    prefer closed_form_trs_ecc.
    """
    space = 1.5 * N
    _check_pow2_multiple(space, M)
    levels = space / M
    term_solves = c * space**alpha * (2.0 * levels**0.5 - 1.0)
    term_mms = (2.0 * k_mm * (3.0 * N / 4.0)**1.5 / M**0.5
                * (4.0**(alpha - 1.0) * levels**(alpha - 1.0) - 1.0))
    base_term = 2.0 * levels**alpha * M
    return term_solves + term_mms + base_term


def csv_row(algorithm: str, n: int, base: int, M, alpha, ws: WorkSpan,
            pcc: PccReport, eccr: EccReport) -> dict:
    """One stable row of the complexity report."""
    return {
        "algorithm": algorithm,
        "n": n,
        "base": base,
        "M": M,
        "alpha": alpha,
        "work": ws.work,
        "span": ws.span,
        "qstar": pcc.qstar,
        "qhat": eccr.qhat,
        "dominant": eccr.dominant,
    }
