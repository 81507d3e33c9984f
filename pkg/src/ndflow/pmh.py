"""Parallel memory hierarchy machine model.

A machine is a symmetric tree: infinite root memory, h-1 cache levels, and
processors at the leaves.  Level i caches hold M_i words, have fan-out f_i
(number of level-(i-1) components beneath each), and charge C_i timesteps
to bring a word in from level i+1.  C_0 is the cost of one unit of strand
work; M_0 is the register-file constant used only in fan-out ratios.  The
cache block is one word.

Config text format, one line per level plus scalars:

    level 0: M=4 C=1
    level 1: M=96 f=2 C=8
    level 2: M=768 f=2 C=512
    root: f=2
    sigma=0.3333
    k=0.5

C on a cache line is the cost of filling that level on a miss, so the top
cache line carries the root-memory latency.  h counts the cache levels
including the root memory: the file above is a 3-level hierarchy (two
finite cache levels below the root).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field


class MachineError(Exception):
    pass


@dataclass(frozen=True)
class CacheLevel:
    M: float
    f: int
    C: float


@dataclass
class MachineConfig:
    levels: list  # CacheLevel for levels 1..h-1, smallest first
    root_fanout: int
    M0: float = 4.0
    C0: float = 1.0
    sigma: float = 1.0 / 3.0
    k: float = 0.5

    def __post_init__(self):
        if not self.levels:
            raise MachineError("need at least one finite cache level")
        sizes = [self.M0] + [lv.M for lv in self.levels]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise MachineError(f"cache sizes must be strictly increasing, got {sizes}")
        if any(lv.f < 1 for lv in self.levels) or self.root_fanout < 1:
            raise MachineError("fan-outs must be at least 1")
        if not (0 < self.sigma < 1):
            raise MachineError(f"sigma must be in (0,1), got {self.sigma}")
        if not (0 < self.k < 1):
            raise MachineError(f"k must be in (0,1), got {self.k}")

    @property
    def h(self) -> int:
        """Number of cache levels counting the root memory."""
        return len(self.levels) + 1

    @property
    def p(self) -> int:
        out = self.root_fanout
        for lv in self.levels:
            out *= lv.f
        return out

    def M(self, i: int) -> float:
        """Cache size at level i (level 0 is the register constant)."""
        if i == 0:
            return self.M0
        return self.levels[i - 1].M

    def f(self, i: int) -> int:
        return self.levels[i - 1].f

    def C(self, i: int) -> float:
        """Cost per miss at level i (a word entering level i from level i+1)."""
        if i == 0:
            return self.C0
        return self.levels[i - 1].C

    def caches_at(self, i: int) -> int:
        """Number of level-i cache instances."""
        out = self.root_fanout
        for lv in reversed(self.levels[i:]):
            out *= lv.f
        return out

    def procs_per_cache(self, i: int) -> int:
        out = 1
        for lv in self.levels[:i]:
            out *= lv.f
        return out

    @property
    def beta(self) -> float:
        """Machine parallelism: max_i log f_i / log(M_i / M_{i-1}).

        The root level contributes nothing (its size is infinite).
        """
        best = 0.0
        prev = self.M0
        for lv in self.levels:
            best = max(best, math.log(lv.f) / math.log(lv.M / prev))
            prev = lv.M
        return best

    def describe(self) -> str:
        parts = [f"level {i + 1}: M={lv.M:g} f={lv.f} C={lv.C:g}"
                 for i, lv in enumerate(self.levels)]
        parts.append(f"root: f={self.root_fanout}")
        return f"h={self.h} p={self.p} sigma={self.sigma:.4f} | " + " | ".join(parts)


def allocate(machine: MachineConfig, size: float, level: int, alpha_prime: float) -> int:
    """Subclusters granted to a size-S task anchored at a level-`level` cache:

        g(S) = min(f, max(1, floor(f * (3S/M)^alpha')))

    The factor 3 provisions against worst-case packing of anchored tasks.
    """
    if level == 0:
        return 1
    f = machine.f(level)
    M = machine.M(level)
    return min(f, max(1, math.floor(f * (3.0 * size / M) ** alpha_prime)))


def overhead_v(machine: MachineConfig, alpha_prime: float, k: float | None = None) -> float:
    """Load-imbalance overhead factor over the perfectly balanced time:

        v_h = 2 * prod_{j=1}^{h-1} (1/k + f_j / ((1-k) * (M_j/M_{j-1})^alpha'))
    """
    if k is None:
        k = machine.k
    out = 2.0
    prev = machine.M0
    for lv in machine.levels:
        out *= 1.0 / k + lv.f / ((1.0 - k) * (lv.M / prev) ** alpha_prime)
        prev = lv.M
    return out


_LEVEL_RE = re.compile(r"^level\s+(\d+)\s*:\s*(.*)$")
_ROOT_RE = re.compile(r"^root\s*:\s*(.*)$")


def _parse_fields(body: str, lineno: int) -> dict:
    out = {}
    for tok in body.split():
        if "=" not in tok:
            raise MachineError(f"line {lineno}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        out[key] = float(val)
    return out


def parse_machine(text: str) -> MachineConfig:
    levels: dict[int, CacheLevel] = {}
    root = None
    m0, c0 = 4.0, 1.0
    sigma, k = 1.0 / 3.0, 0.5
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LEVEL_RE.match(line)
        if m:
            idx = int(m.group(1))
            fields = _parse_fields(m.group(2), lineno)
            if idx == 0:
                m0 = fields.get("M", m0)
                c0 = fields.get("C", c0)
            else:
                try:
                    levels[idx] = CacheLevel(M=fields["M"], f=int(fields["f"]), C=fields["C"])
                except KeyError as e:
                    raise MachineError(f"line {lineno}: level needs M, f and C ({e})")
            continue
        m = _ROOT_RE.match(line)
        if m:
            fields = _parse_fields(m.group(1), lineno)
            root = int(fields.get("f", 1))
            continue
        if line.startswith("sigma="):
            sigma = float(line.split("=", 1)[1])
            continue
        if line.startswith("k="):
            k = float(line.split("=", 1)[1])
            continue
        raise MachineError(f"line {lineno}: cannot parse {raw!r}")
    if root is None:
        raise MachineError("config is missing the root line")
    if sorted(levels) != list(range(1, len(levels) + 1)):
        raise MachineError(f"cache levels must be 1..{len(levels)}, got {sorted(levels)}")
    return MachineConfig(
        levels=[levels[i] for i in sorted(levels)],
        root_fanout=root, M0=m0, C0=c0, sigma=sigma, k=k,
    )


def format_machine(machine: MachineConfig) -> str:
    lines = [f"level 0: M={machine.M0:g} C={machine.C0:g}"]
    for i, lv in enumerate(machine.levels, 1):
        lines.append(f"level {i}: M={lv.M:g} f={lv.f} C={lv.C:g}")
    lines.append(f"root: f={machine.root_fanout}")
    lines.append(f"sigma={machine.sigma}")
    lines.append(f"k={machine.k}")
    return "\n".join(lines) + "\n"
