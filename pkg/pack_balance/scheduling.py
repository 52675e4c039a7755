"""
Sequence packing and FLOPs load balancing.

Both planners are deterministic: ties are broken by item id, then by bin or
group index.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field

from Keye_Curation.exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)

COST_MODES = ('linear', 'quadratic')


@dataclass(frozen=True)
class WorkItem:
    id: str
    tokens: int
    cost: float = None

    def __post_init__(self):
        if not isinstance(self.tokens, int) or isinstance(self.tokens, bool) or self.tokens < 1:
            raise InvalidInputError(f"Token count must be a positive integer, got {self.tokens!r}.", record_id=self.id)
        if self.cost is None:
            object.__setattr__(self, 'cost', float(self.tokens))
        elif not math.isfinite(self.cost) or self.cost < 0:
            raise InvalidInputError(f"Cost must be finite and non-negative, got {self.cost!r}.", record_id=self.id)


def estimate_cost(tokens, mode='linear', ctx=None):
    """FLOPs proxy: tokens, plus tokens^2 / ctx for the attention-aware mode."""
    if tokens < 1:
        raise InvalidInputError(f"Token count must be at least 1, got {tokens}.")
    if mode == 'linear':
        return float(tokens)
    if mode == 'quadratic':
        if ctx is None or ctx <= 0:
            raise ConfigurationError("Quadratic cost mode needs a positive context length.")
        return tokens + tokens * tokens / ctx
    raise ConfigurationError(f"Unknown cost mode {mode!r}; expected one of {COST_MODES}.")


@dataclass
class GroupAssignment:
    groups: int
    assignment: dict = field(default_factory=dict)
    loads: list = field(default_factory=list)

    @property
    def makespan(self):
        return max(self.loads) if self.loads else 0.0

    def members(self, group):
        return [item_id for item_id, g in self.assignment.items() if g == group]


def balance_greedy(items, m):
    """
    Longest-processing-time assignment: items by descending cost, each to the
    group with the lowest current load (lowest index on ties).
    """
    if m < 1:
        raise ConfigurationError(f"Need at least one group, got {m}.")
    heap = [(0.0, g) for g in range(m)]
    result = GroupAssignment(groups=m, loads=[0.0] * m)
    for item in sorted(items, key=lambda i: (-i.cost, i.id)):
        if item.id in result.assignment:
            raise InvalidInputError(f"Duplicate item id {item.id!r}.", record_id=item.id)
        load, group = heapq.heappop(heap)
        result.assignment[item.id] = group
        result.loads[group] = load + item.cost
        heapq.heappush(heap, (result.loads[group], group))
    logger.debug(f"Balanced {len(result.assignment)} items over {m} groups, makespan {result.makespan}")
    return result


@dataclass
class PackPlan:
    capacity: int
    bins: list = field(default_factory=list)

    @property
    def fills(self):
        return [fill for _, fill in self.bins]


def pack_ffd(items, capacity):
    """First-fit decreasing by token count (ties by id); sequences are never split."""
    if capacity < 1:
        raise ConfigurationError(f"Capacity must be positive, got {capacity}.")
    items = sorted(items, key=lambda i: (-i.tokens, i.id))
    for item in items:
        if item.tokens > capacity:
            raise InvalidInputError(
                f"Item has {item.tokens} tokens, more than the capacity {capacity}.", record_id=item.id
            )

    contents, fills = [], []
    for item in items:
        for b, fill in enumerate(fills):
            if fill + item.tokens <= capacity:
                contents[b].append(item.id)
                fills[b] += item.tokens
                break
        else:
            contents.append([item.id])
            fills.append(item.tokens)
    logger.debug(f"Packed {len(items)} items into {len(fills)} bins of {capacity}")
    return PackPlan(capacity, list(zip(contents, fills)))
