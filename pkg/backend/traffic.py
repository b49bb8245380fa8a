from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

# Role of this module:
# Background sources B. Packets arrive by a Bernoulli process; an idle source with a
# nonempty queue activates with some probability and then transmits one packet per slot
# until its queue is empty. The channel is busy whenever any source transmits.


@dataclass
class BackgroundSource:
    id: str
    arrival_rate: float
    activation_probability: float
    queue_length: int = 0
    active: bool = False

    def __post_init__(self):
        if not 0.0 <= self.arrival_rate <= 1.0:
            raise ValueError(f"{self.id}: arrival_rate out of [0,1]")
        if not 0.0 <= self.activation_probability <= 1.0:
            raise ValueError(f"{self.id}: activation_probability out of [0,1]")
        if self.queue_length < 0:
            raise ValueError(f"{self.id}: queue_length must be >= 0")


@dataclass(frozen=True)
class SlotStatus:
    busy: bool
    transmitting_sources: Tuple[str, ...] = ()

    @property
    def label(self) -> int:
        """S_t as a class label: 1 busy, 0 idle."""
        return int(self.busy)


def step(source: BackgroundSource, rng: np.random.Generator) -> Tuple[BackgroundSource, bool]:
    """
    Advance one source by one slot (mutates and returns it).

    Order within a slot: arrival, then activation, then service. Two uniforms are
    drawn every slot so the stream position does not depend on the queue state.
    """
    u_arrival, u_activate = rng.random(2)
    if u_arrival < source.arrival_rate:
        source.queue_length += 1
    if not source.active and source.queue_length > 0 and u_activate < source.activation_probability:
        source.active = True

    transmitting = False
    if source.active:
        transmitting = True
        source.queue_length -= 1
        if source.queue_length == 0:
            source.active = False
    return source, transmitting


def channel_status(sources: Sequence[BackgroundSource], rngs: Sequence[np.random.Generator]) -> SlotStatus:
    """Step every source; S_t is busy iff at least one transmits."""
    if len(sources) != len(rngs):
        raise ValueError("one generator per source is required")
    transmitting = []
    for source, rng in zip(sources, rngs):
        _, on = step(source, rng)
        if on:
            transmitting.append(source.id)
    return SlotStatus(busy=bool(transmitting), transmitting_sources=tuple(transmitting))


def generate_status_trace(
    sources: Sequence[BackgroundSource],
    rngs: Sequence[np.random.Generator],
    n_slots: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run n_slots of background traffic.

    Returns:
        (S, on) where S is the 0/1 busy sequence (n_slots,) and on is the per-source
        transmit indicator matrix (n_slots, len(sources))
    """
    on = np.zeros((n_slots, len(sources)), dtype=bool)
    for t in range(n_slots):
        status = channel_status(sources, rngs)
        for j, source in enumerate(sources):
            on[t, j] = source.id in status.transmitting_sources
    busy = on.any(axis=1).astype(int) if len(sources) else np.zeros(n_slots, dtype=int)
    return busy, on


def busy_runs(status: Sequence[int]) -> List[int]:
    """Lengths of maximal busy runs in an S_t sequence."""
    runs: List[int] = []
    current = 0
    for s in status:
        if s:
            current += 1
        elif current:
            runs.append(current)
            current = 0
    if current:
        runs.append(current)
    return runs


def make_sources(ids: Sequence[str], arrival_rate: float, activation_probability: float) -> List[BackgroundSource]:
    return [BackgroundSource(id=i, arrival_rate=arrival_rate, activation_probability=activation_probability) for i in ids]
