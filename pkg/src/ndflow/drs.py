"""Spawn-tree unfolding and dataflow-arrow rewriting.

The dynamic semantics of the task model are a DAG rewriting system with two
rules.  A *spawn* turns a leaf of the spawn tree into a binary internal node;
if the construct is serial or a fire type, a dashed arrow labeled with the
construct is added from the left child to the right child.  A *fire* rewrite
takes a dashed arrow and replaces it with the arrows dictated by its label's
fire-rule set, re-anchored at the pedigrees the rules name.  When both ends
of an arrow are strands the arrow either becomes a solid dependency edge (a
nonempty rule set, or the serial construct) or disappears (an empty set).

Arrows are carried here as *obligations* `(src node, src path, dst node,
dst path, label)`: an arrow whose endpoint pedigrees still have to be
resolved by descending the tree.  A rule that addresses a deeper subtree
than has been spawned so far is parked on the blocking node and re-attempted
after that node spawns, which makes any interleaving of spawn and fire steps
confluent (tested).

Serial arrows between internal nodes stand for all-to-all dependencies
between the leaf sets.  Materializing those is quadratic, so they are encoded
through zero-cost *barrier* vertices: every left leaf enters the barrier and
the barrier enters every right leaf.  Longest paths, transitive closure,
readiness and scheduling all see exactly the all-to-all semantics.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .core import EMPTY, PARALLEL, SERIAL, Pedigree, Registry

LEAF = 0
INTERNAL = 1


class StructureError(Exception):
    """Spawn-tree misuse: spawning a non-leaf, unknown labels, bad pedigrees."""


class RuleBelowBaseCase(Exception):
    """A fire rule addresses descendants of a strand, which will never spawn."""


class DivergenceError(Exception):
    """The rewrite budget was exhausted; the rule registry cannot terminate."""


class SpawnTree:
    """Mutable spawn tree with integer node ids (0 is the root).

    Node storage is columnar (parallel lists) because expansions reach a few
    hundred thousand nodes.  `spec[i]` is the program payload that decides
    whether node i is a strand or how it spawns; `size[i]` is the task
    footprint in words, filled in by `Expansion.compute_sizes`.
    """

    def __init__(self, root_spec):
        self.parent = [-1]
        self.children = [None]  # None for leaves, (left, right) for internal
        self.construct = [None]  # label of the construct at an internal node
        self.spec = [root_spec]
        self.size = [None]
        self.step = [0]  # position of this node in its parent (1 or 2)

    def __len__(self):
        return len(self.parent)

    def is_leaf(self, node: int) -> bool:
        return self.children[node] is None

    def is_strand(self, node: int) -> bool:
        return self.children[node] is None and self.spec[node].is_strand()

    def add_leaf(self, parent: int, step: int, spec) -> int:
        nid = len(self.parent)
        self.parent.append(parent)
        self.children.append(None)
        self.construct.append(None)
        self.spec.append(spec)
        self.size.append(None)
        self.step.append(step)
        return nid

    def spawn(self, node: int, label: str, left_spec, right_spec) -> tuple[int, int]:
        """Rewrite leaf `node` into an internal `label` node with two leaves."""
        if not self.is_leaf(node):
            raise StructureError(f"node {node} already spawned")
        left = self.add_leaf(node, 1, left_spec)
        right = self.add_leaf(node, 2, right_spec)
        self.children[node] = (left, right)
        self.construct[node] = label
        return left, right

    def descend(self, node: int, path: Pedigree):
        """Follow `path` from `node` while children exist.

        Returns (reached node, remaining path).  A nonempty remainder means
        the walk stopped at a leaf that has not spawned (or never will).
        """
        for i, step in enumerate(path):
            kids = self.children[node]
            if kids is None:
                return node, Pedigree(path[i:])
            if step not in (1, 2):
                raise StructureError(f"pedigree step {step} at node {node} (binary tree)")
            node = kids[step - 1]
        return node, EMPTY

    def pedigree_of(self, node: int, ancestor: int = 0) -> Pedigree:
        steps = []
        while node != ancestor:
            steps.append(self.step[node])
            node = self.parent[node]
            if node < 0:
                raise StructureError("node is not a descendant of ancestor")
        return Pedigree(reversed(steps))

    def leaves_under(self, node: int) -> list[int]:
        out = []
        stack = [node]
        while stack:
            n = stack.pop()
            kids = self.children[n]
            if kids is None:
                out.append(n)
            else:
                stack.append(kids[1])
                stack.append(kids[0])
        return out


@dataclass(frozen=True)
class Obligation:
    """A dataflow arrow whose endpoint pedigrees are not yet fully resolved."""

    src: int
    src_path: Pedigree
    dst: int
    dst_path: Pedigree
    label: str


@dataclass
class Expansion:
    """A fully unrolled program: spawn tree plus the strand-level DAG.

    `edges` are solid strand-to-strand dependencies.  `barriers` encode
    all-to-all serial dependencies: barrier id -> (entering strands,
    exiting strands).  Barrier ids live in their own namespace.
    """

    tree: SpawnTree
    strands: list  # strand node ids in left-to-right (serial elision) order
    edges: set  # (src strand, dst strand)
    barriers: dict  # barrier id -> (tuple of in-strands, tuple of out-strands)
    rewrites: int = 0
    _preds: dict | None = field(default=None, repr=False)
    _succs: dict | None = field(default=None, repr=False)
    _order: dict | None = field(default=None, repr=False)

    # -- basic views --------------------------------------------------------

    @property
    def strand_set(self):
        return set(self.strands)

    def serial_rank(self, strand: int) -> int:
        if self._order is None:
            self._order = {s: i for i, s in enumerate(self.strands)}
        return self._order[strand]

    def predecessors(self) -> dict:
        """strand/barrier -> list of strand/barrier predecessors."""
        if self._preds is None:
            preds = {s: [] for s in self.strands}
            for b, (ins, outs) in self.barriers.items():
                preds[b] = list(ins)
                for t in outs:
                    preds[t].append(b)
            for s, t in self.edges:
                preds[t].append(s)
            self._preds = preds
        return self._preds

    def successors(self) -> dict:
        if self._succs is None:
            succs = {s: [] for s in self.strands}
            for b, (ins, outs) in self.barriers.items():
                succs[b] = list(outs)
                for s in ins:
                    succs[s].append(b)
            for s, t in self.edges:
                succs[s].append(t)
            self._succs = succs
        return self._succs

    def ready_set(self, done: set) -> set:
        """Strands executable now: not done, every predecessor satisfied.

        A barrier predecessor is satisfied when all strands entering it are
        done.  `done` must be closed under the execution history.
        """
        preds = self.predecessors()
        ready = set()
        for s in self.strands:
            if s in done:
                continue
            ok = True
            for p in preds[s]:
                if p in self.barriers:
                    if any(q not in done for q in self.barriers[p][0]):
                        ok = False
                        break
                elif p not in done:
                    ok = False
                    break
            if ok:
                ready.add(s)
        return ready

    def topological_order(self, seed=None) -> list:
        """A topological order of the strand DAG; seeded orders shuffle ties."""
        preds = self.predecessors()
        indeg = {n: len(ps) for n, ps in preds.items()}
        succs = self.successors()
        frontier = [n for n, d in indeg.items() if d == 0]
        rng = random.Random(seed) if seed is not None else None
        out = []
        while frontier:
            if rng is None:
                n = frontier.pop()
            else:
                n = frontier.pop(rng.randrange(len(frontier)))
            out.append(n)
            for t in succs[n]:
                indeg[t] -= 1
                if indeg[t] == 0:
                    frontier.append(t)
        if len(out) != len(indeg):
            raise StructureError("dependency graph has a cycle")
        return [n for n in out if n not in self.barriers]

    def assert_acyclic(self):
        self.topological_order()

    # -- transitive closure (strand pairs), for oracle checks ---------------

    def closure_bits(self) -> dict:
        """node -> bitmask over serial ranks of strands reachable from it."""
        order = self.topological_order_all()
        succs = self.successors()
        bit = {s: 1 << self.serial_rank(s) for s in self.strands}
        reach = {}
        for n in reversed(order):
            acc = 0
            for t in succs[n]:
                acc |= reach[t]
                if t not in self.barriers:
                    acc |= bit[t]
            reach[n] = acc
        return reach

    def topological_order_all(self) -> list:
        preds = self.predecessors()
        indeg = {n: len(ps) for n, ps in preds.items()}
        succs = self.successors()
        frontier = [n for n, d in indeg.items() if d == 0]
        out = []
        while frontier:
            n = frontier.pop()
            out.append(n)
            for t in succs[n]:
                indeg[t] -= 1
                if indeg[t] == 0:
                    frontier.append(t)
        if len(out) != len(indeg):
            raise StructureError("dependency graph has a cycle")
        return out

    def closure_pairs(self) -> set:
        """All ordered reachable strand pairs (a, b), a != b.  Small DAGs only."""
        reach = self.closure_bits()
        rank_to_strand = {self.serial_rank(s): s for s in self.strands}
        pairs = set()
        for s in self.strands:
            bits = reach[s]
            while bits:
                low = bits & -bits
                pairs.add((s, rank_to_strand[low.bit_length() - 1]))
                bits ^= low
        return pairs

    # -- sizes ---------------------------------------------------------------

    def compute_sizes(self):
        """Fill tree.size with exact footprints (distinct words touched).

        Strand footprints come from the kernels' declared read/write sets;
        internal sizes are set unions, computed post-order.  Exactness
        matters: the cache simulator's miss bound is stated against these.
        """
        tree = self.tree
        if tree.size[0] is not None:
            return
        sets: dict[int, frozenset] = {}
        stack = [(0, False)]
        while stack:
            node, processed = stack.pop()
            kids = tree.children[node]
            if kids is None:
                fp = frozenset(tree.spec[node].footprint())
                sets[node] = fp
                tree.size[node] = len(fp)
                continue
            if not processed:
                stack.append((node, True))
                stack.append((kids[0], False))
                stack.append((kids[1], False))
            else:
                fp = sets.pop(kids[0]) | sets.pop(kids[1])
                sets[node] = fp
                tree.size[node] = len(fp)
        del sets

    # -- export ---------------------------------------------------------------

    def export_edges(self) -> str:
        """Line-oriented edge list; barriers appear as B<i> pseudo-vertices."""
        lines = []
        for s, t in sorted(self.edges):
            lines.append(f"{s} {t}")
        for b in sorted(self.barriers):
            ins, outs = self.barriers[b]
            for s in sorted(ins):
                lines.append(f"{s} B{b}")
            for t in sorted(outs):
                lines.append(f"B{b} {t}")
        return "\n".join(lines) + "\n"

    def export_manifest(self) -> str:
        """strand id -> pedigree and kernel description, one per line."""
        lines = []
        for s in self.strands:
            ped = self.tree.pedigree_of(s)
            lines.append(f"{s}\t{ped.format() or '.'}\t{self.tree.spec[s].describe()}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# The rewriting engine.


def refine_obligation(tree: SpawnTree, ob: Obligation, registry: Registry):
    """One rewriting step for a single arrow.

    Returns ("edge", (s, t)) for a solid edge, ("barrier", (src, dst)) for an
    all-to-all serial dependency, ("children", [obligations]) when the arrow
    was rewritten, ("park", node) when a pedigree cannot be resolved until
    `node` spawns, or ("drop", None) when the arrow vanishes (parallel).
    """
    s, s_rem = tree.descend(ob.src, ob.src_path)
    if s_rem:
        if tree.is_strand(s):
            raise RuleBelowBaseCase(
                f"rule path {ob.src_path.format()} descends below strand {s} "
                f"({tree.spec[s].describe()})"
            )
        return "park", s
    d, d_rem = tree.descend(ob.dst, ob.dst_path)
    if d_rem:
        if tree.is_strand(d):
            raise RuleBelowBaseCase(
                f"rule path {ob.dst_path.format()} descends below strand {d} "
                f"({tree.spec[d].describe()})"
            )
        return "park", d

    label = ob.label
    if label == PARALLEL:
        return "drop", None
    both_strands = tree.is_strand(s) and tree.is_strand(d)
    if label == SERIAL:
        if both_strands:
            return "edge", (s, d)
        return "barrier", (s, d)
    try:
        ruleset = registry[label]
    except KeyError:
        raise StructureError(f"unknown fire label {label!r}")
    if both_strands:
        # Strand-to-strand arrows collapse: full dependency unless parallel.
        if ruleset.is_parallel:
            return "drop", None
        return "edge", (s, d)
    if ruleset.is_parallel:
        return "drop", None
    children = [
        Obligation(s, r.src.path, d, r.dst.path, r.label) for r in ruleset.rules
    ]
    return "children", children


def expand(program, seed=None, budget=10_000_000) -> Expansion:
    """Fully unroll a program's spawn tree and refine every arrow.

    `program` provides `root_spec` and `registry`.  With a seed, the work
    queue order is randomized; the resulting edge set must not change
    (confluence), only discovery order does.
    """
    tree = SpawnTree(program.root_spec)
    registry = program.registry
    edges: set = set()
    barrier_list: list = []
    parked: dict[int, list] = {}
    rng = random.Random(seed) if seed is not None else None

    # Work items: ("spawn", node) or ("arrow", Obligation).
    queue: deque = deque()
    if not tree.is_strand(0):
        queue.append(("spawn", 0))
    rewrites = 0

    def push(item):
        if rng is not None and queue and rng.random() < 0.5:
            queue.appendleft(item)
        else:
            queue.append(item)

    while queue:
        if rng is None:
            kind, payload = queue.popleft()
        else:
            idx = rng.randrange(len(queue))
            queue.rotate(-idx)
            kind, payload = queue.popleft()
            queue.rotate(idx)

        if kind == "spawn":
            node = payload
            label, left_spec, right_spec = tree.spec[node].spawn()
            left, right = tree.spawn(node, label, left_spec, right_spec)
            if label != PARALLEL:
                push(("arrow", Obligation(left, EMPTY, right, EMPTY, label)))
            if not tree.is_strand(left):
                push(("spawn", left))
            if not tree.is_strand(right):
                push(("spawn", right))
            for ob in parked.pop(node, ()):
                push(("arrow", ob))
            continue

        rewrites += 1
        if rewrites > budget:
            raise DivergenceError(f"rewrite budget of {budget} exhausted")
        action, result = refine_obligation(tree, payload, registry)
        if action == "edge":
            edges.add(result)
        elif action == "barrier":
            barrier_list.append(result)
        elif action == "children":
            for ob in result:
                push(("arrow", ob))
        elif action == "park":
            parked.setdefault(result, []).append(payload)
        # "drop": nothing to do

    if parked:
        raise StructureError(f"unresolved arrows parked on nodes {sorted(parked)}")

    strands = tree.leaves_under(0)
    barriers = {}
    for i, (s, d) in enumerate(sorted(set(barrier_list))):
        ins = tuple(tree.leaves_under(s))
        outs = tuple(tree.leaves_under(d))
        if len(ins) == 1 and len(outs) == 1:
            edges.add((ins[0], outs[0]))
        else:
            barriers[-(i + 1)] = (ins, outs)  # negative ids: own namespace

    exp = Expansion(tree=tree, strands=strands, edges=edges, barriers=barriers,
                    rewrites=rewrites)
    exp.assert_acyclic()
    return exp
