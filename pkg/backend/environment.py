from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Tuple

import numpy as np

from backend.channel import mean_gain, sample_gain, sample_noise
from backend.config import Position, ScenarioConfig, SeedStreams, distance
from backend.traffic import BackgroundSource, generate_status_trace, make_sources

# Role of this module:
# The physical world of one replication. It owns the background sources and one
# generator per link and per noise process, and advances slot by slot producing every
# quantity any node could observe. Every link and noise term is sampled every slot
# whether or not anybody transmits, so attack and defense choices never shift the
# traffic or channel realization.

logger = logging.getLogger(__name__)


@dataclass
class EnvironmentTrace:
    """Per-slot physical quantities for a run of slots starting at global index `start`."""

    start: int
    status: np.ndarray          # S_t, 1 busy
    on: np.ndarray              # (n, sources) transmit indicators
    power_T: np.ndarray         # clean sensed power at T
    power_A: np.ndarray         # sensed power at A from background only
    rx_TA: np.ndarray           # T's received power at A (data period)
    signal_TR: np.ndarray       # g_TR * P_T
    interference_R: np.ndarray  # sum of background power at R
    noise_R: np.ndarray
    poison_T: np.ndarray        # g_AT * P_A, added to T's sensing when A transmits in the sensing period
    jam_R: np.ndarray           # g_AR * P_A, added at R when A jams the data period

    def __len__(self) -> int:
        return len(self.status)

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self))

    def slice(self, lo: int, hi: int) -> "EnvironmentTrace":
        """Slots [lo, hi) relative to this trace."""
        kwargs = {f.name: getattr(self, f.name)[lo:hi] for f in fields(self) if f.name != "start"}
        return EnvironmentTrace(start=self.start + lo, **kwargs)

    @staticmethod
    def concat(parts: List["EnvironmentTrace"]) -> "EnvironmentTrace":
        if not parts:
            raise ValueError("nothing to concatenate")
        kwargs = {
            f.name: np.concatenate([getattr(p, f.name) for p in parts])
            for f in fields(EnvironmentTrace) if f.name != "start"
        }
        return EnvironmentTrace(start=parts[0].start, **kwargs)


class Environment:
    def __init__(self, config: ScenarioConfig, streams: SeedStreams):
        self.config = config
        self.sources: List[BackgroundSource] = make_sources(
            config.source_ids(), config.arrival_rate, config.activation_probability
        )
        self.positions: Dict[str, Position] = {n.id: tuple(n.position) for n in config.nodes}
        self.powers: Dict[str, float] = {n.id: n.transmit_power for n in config.nodes}
        self.t_id = config.transmitter.id
        self.r_id = config.receiver.id
        self.a_id = config.adversary.id

        self._traffic_rngs = [streams.stream(f"traffic:{s.id}") for s in self.sources]
        self._links = [(s.id, dst) for s in self.sources for dst in (self.t_id, self.r_id, self.a_id)]
        self._links += [(self.t_id, self.r_id), (self.t_id, self.a_id),
                        (self.a_id, self.t_id), (self.a_id, self.r_id)]
        self._gain_rngs = {link: streams.stream(f"gain:{link[0]}->{link[1]}") for link in self._links}
        self._noise_rngs = {node: streams.stream(f"noise:{node}") for node in (self.t_id, self.a_id, self.r_id)}
        self.slot = 0

    def mean_gain(self, src: str, dst: str) -> float:
        return mean_gain(distance(self.positions[src], self.positions[dst]))

    def relocate(self, node_id: str, position: Position) -> None:
        """Move a node (mobility); gains drawn from now on use the new path loss."""
        if node_id not in self.positions:
            raise ValueError(f"unknown node '{node_id}'")
        others = [p for n, p in self.positions.items() if n != node_id]
        for p in others:
            distance(position, p)
        self.positions[node_id] = tuple(position)
        logger.info("relocated %s to %s", node_id, tuple(position))

    def _gains(self, src: str, dst: str, n: int) -> np.ndarray:
        return sample_gain(self.config.channel_model, self.mean_gain(src, dst), self._gain_rngs[(src, dst)], size=n)

    def _noise(self, node: str, n: int) -> np.ndarray:
        return sample_noise(self.config.noise_power, self.config.noise_relative_std, self._noise_rngs[node], size=n)

    def advance(self, n: int) -> EnvironmentTrace:
        """Simulate the next n slots."""
        if n < 0:
            raise ValueError("slot count must be >= 0")
        status, on = generate_status_trace(self.sources, self._traffic_rngs, n)

        def background_at(dst: str) -> np.ndarray:
            total = np.zeros(n)
            for j, source in enumerate(self.sources):
                g = self._gains(source.id, dst, n)
                total += on[:, j] * g * self.powers[source.id]
            return total

        bg_T = background_at(self.t_id)
        bg_R = background_at(self.r_id)
        bg_A = background_at(self.a_id)
        p_t = self.powers[self.t_id]
        p_a = self.powers[self.a_id]
        trace = EnvironmentTrace(
            start=self.slot,
            status=status,
            on=on,
            power_T=self._noise(self.t_id, n) + bg_T,
            power_A=self._noise(self.a_id, n) + bg_A,
            rx_TA=self._gains(self.t_id, self.a_id, n) * p_t,
            signal_TR=self._gains(self.t_id, self.r_id, n) * p_t,
            interference_R=bg_R,
            noise_R=self._noise(self.r_id, n),
            poison_T=self._gains(self.a_id, self.t_id, n) * p_a,
            jam_R=self._gains(self.a_id, self.r_id, n) * p_a,
        )
        self.slot += n
        return trace
