"""Static vocabulary of the nested-dataflow task model.

A program is a spawn tree whose internal nodes are binary composition
constructs and whose leaves are strands (serial code).  Besides the two
classic constructs (serial ';' and parallel '||') there is a family of
user-defined "fire" constructs expressing partial dependencies.  Each fire
construct is named by a label and defined by a finite set of fire rules.
A fire rule

    +<source pedigree>  ->  -<sink pedigree>   via LABEL

says: the subtask at the given pedigree under the construct's left operand
must fire (via the named construct) the subtask at the given pedigree under
the right operand.  Pedigrees are paths of 1-based child indices; the empty
pedigree addresses the operand itself.

Everything in this module is immutable and safe to share between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

# Reserved construct labels; registries may not redefine them.
SERIAL = "SERIAL"
PARALLEL = "PARALLEL"
RESERVED_LABELS = frozenset({SERIAL, PARALLEL})


class Pedigree(tuple):
    """Path of 1-based child indices locating a descendant of a task.

    The empty pedigree denotes the task itself.  All constructs here are
    binary, so steps are 1 or 2, but any positive step is accepted.
    """

    __slots__ = ()

    def __new__(cls, steps=()):
        steps = tuple(steps)
        for s in steps:
            if not isinstance(s, int) or s < 1:
                raise ValueError(f"pedigree steps must be positive integers, got {steps!r}")
        return super().__new__(cls, steps)

    def concat(self, other: "Pedigree") -> "Pedigree":
        """Concatenation: self followed by other."""
        return Pedigree(tuple(self) + tuple(other))

    def __repr__(self):
        return "<%s>" % ",".join(str(s) for s in self)

    def format(self) -> str:
        """Dot-separated text form; empty pedigree renders as ''."""
        return ".".join(str(s) for s in self)

    @classmethod
    def parse(cls, text: str) -> "Pedigree":
        text = text.strip()
        if not text:
            return cls()
        return cls(int(p) for p in text.split("."))


EMPTY = Pedigree()


def pedigree_concat(a: Pedigree, b: Pedigree) -> Pedigree:
    return Pedigree(a).concat(Pedigree(b))


class Endpoint(enum.Enum):
    SOURCE = "+"
    SINK = "-"


@dataclass(frozen=True)
class RuleAtom:
    """One side of a fire rule: a wildcard endpoint plus a pedigree under it."""

    endpoint: Endpoint
    path: Pedigree

    def format(self) -> str:
        return self.endpoint.value + self.path.format()


def src(*steps: int) -> RuleAtom:
    return RuleAtom(Endpoint.SOURCE, Pedigree(steps))


def snk(*steps: int) -> RuleAtom:
    return RuleAtom(Endpoint.SINK, Pedigree(steps))


@dataclass(frozen=True)
class FireRule:
    """`src.path` under the source fires `dst.path` under the sink, via `label`."""

    src: RuleAtom
    dst: RuleAtom
    label: str

    def __post_init__(self):
        if self.src.endpoint is not Endpoint.SOURCE:
            raise ValueError("fire rule source atom must be a SOURCE endpoint")
        if self.dst.endpoint is not Endpoint.SINK:
            raise ValueError("fire rule sink atom must be a SINK endpoint")

    def format(self) -> str:
        return f"{self.src.format()} -> {self.dst.format()} via {self.label}"


def rule(src_steps, dst_steps, label: str) -> FireRule:
    return FireRule(src(*src_steps), snk(*dst_steps), label)


@dataclass(frozen=True)
class FireRuleSet:
    """A named fire construct: its label and its (possibly empty) rules.

    An empty rule set is parallel composition; the set used by the serial
    construct is `canonical_serial_rules()`.
    """

    name: str
    rules: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @property
    def is_parallel(self) -> bool:
        return len(self.rules) == 0


Registry = dict  # label -> FireRuleSet


def canonical_serial_rules() -> FireRuleSet:
    """Serial composition expressed as a fire construct.

    Four self-recursive rules refine the dependency between every pair of
    subtasks on the two sides; at strand level each surviving arrow becomes a
    real edge, so the expansion is the full left-leaves x right-leaves
    dependency.
    """
    return FireRuleSet(
        SERIAL,
        (
            rule((1,), (1,), SERIAL),
            rule((1,), (2,), SERIAL),
            rule((2,), (1,), SERIAL),
            rule((2,), (2,), SERIAL),
        ),
    )


@dataclass
class ValidationReport:
    """Outcome of validate_registry: failures keep the registry unusable."""

    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_registry(registry: Registry) -> ValidationReport:
    """Check label closure, endpoint orientation and duplicate rules.

    A registry that passes has every referenced label resolvable, so arrow
    refinement can never hit an unknown construct at runtime.
    """
    report = ValidationReport()
    for name, ruleset in registry.items():
        if name in RESERVED_LABELS:
            report.errors.append(f"{name}: reserved label cannot be redefined")
        if ruleset.name != name:
            report.errors.append(f"{name}: rule set is named {ruleset.name!r}")
        seen = set()
        for r in ruleset.rules:
            if r.src.endpoint is not Endpoint.SOURCE or r.dst.endpoint is not Endpoint.SINK:
                report.errors.append(f"{name}: rule {r.format()} has swapped endpoints")
            if r.label not in RESERVED_LABELS and r.label not in registry:
                report.errors.append(f"{name}: rule {r.format()} references unknown label {r.label!r}")
            if r.label == name and not r.src.path and not r.dst.path:
                report.errors.append(f"{name}: rule {r.format()} is a self-loop and cannot terminate")
            key = (r.src.path, r.dst.path, r.label)
            if key in seen:
                report.warnings.append(f"{name}: duplicate rule {r.format()}")
            seen.add(key)
    return report


# ---------------------------------------------------------------------------
# Plain-text registry format: one rule per line,
#     LABEL: +1.2 -> -2.1 via OTHER
# `via` defaults to SERIAL (a full dependency).  '#' starts a comment.


def format_registry(registry: Registry) -> str:
    lines = []
    for name in sorted(registry):
        ruleset = registry[name]
        if not ruleset.rules:
            lines.append(f"{name}:")
        for r in ruleset.rules:
            lines.append(f"{name}: {r.format()}")
    return "\n".join(lines) + "\n"


def parse_registry(text: str) -> Registry:
    """Parse the plain-text rule format; inverse of format_registry."""
    sets: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            name, rest = line.split(":", 1)
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'LABEL: rule', got {raw!r}")
        name = name.strip()
        rest = rest.strip()
        sets.setdefault(name, [])
        if not rest:
            continue  # declares an empty (parallel) rule set
        if " via " in rest:
            body, label = rest.rsplit(" via ", 1)
            label = label.strip()
        else:
            body, label = rest, SERIAL
        try:
            left, right = body.split("->")
        except ValueError:
            raise ValueError(f"line {lineno}: expected '+p -> -q', got {raw!r}")
        left = left.strip()
        right = right.strip()
        if not left.startswith("+") or not right.startswith("-"):
            raise ValueError(f"line {lineno}: endpoints must be '+path -> -path'")
        sets[name].append(
            FireRule(
                RuleAtom(Endpoint.SOURCE, Pedigree.parse(left[1:])),
                RuleAtom(Endpoint.SINK, Pedigree.parse(right[1:])),
                label,
            )
        )
    return {name: FireRuleSet(name, tuple(rules)) for name, rules in sets.items()}
