from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

# Role of this module:
# Physical layer of the simulator. Mean path loss follows the free-space (d^-2) model,
# per-slot gains are drawn from one of four fading families whose linear mean equals
# the path-loss mean, and received powers are composed additively over unit noise.

CHANNEL_KINDS = ("gaussian", "rayleigh", "rician", "lognormal")

NOISE_FLOOR = 1e-9

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ChannelModel:
    """
    Fading model tag plus its parameter.

    - gaussian:  gain ~ N(mean, (relative_std * mean)^2), truncated at 0
    - rayleigh:  exponential power with the given mean
    - rician:    |LOS + scattered|^2, K splitting LOS vs scattered power
    - lognormal: 10^(X/10) with X ~ N(mu_dB, sigma_db^2), mu chosen so the linear mean matches
    """

    kind: str = "gaussian"
    relative_std: float = 0.2
    k_factor: float = 3.0
    sigma_db: float = 3.0

    def violations(self, path: str = "channel_model") -> list[str]:
        errors = []
        if self.kind not in CHANNEL_KINDS:
            errors.append(f"{path}.kind: unknown channel model '{self.kind}' (expected one of {', '.join(CHANNEL_KINDS)})")
        if not self.relative_std >= 0:
            errors.append(f"{path}.relative_std: must be >= 0")
        if not self.k_factor >= 0:
            errors.append(f"{path}.k_factor: must be >= 0")
        if not self.sigma_db >= 0:
            errors.append(f"{path}.sigma_db: must be >= 0")
        return errors


def mean_gain(d: float) -> float:
    """Free-space mean power gain d^-2."""
    if not d > 0:
        raise ValueError(f"distance must be > 0, got {d}")
    return d ** -2.0


def sample_gain(
    model: ChannelModel,
    mean: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> ArrayLike:
    """
    Draw nonnegative linear power gain(s) whose expectation is `mean`.

    Args:
        model: fading family and parameter
        mean: path-loss mean gain (> 0)
        rng: dedicated generator for this link
        size: None for a scalar, otherwise number of slots

    Returns:
        float or ndarray of gains
    """
    if not mean > 0:
        raise ValueError(f"mean gain must be > 0, got {mean}")

    kind = model.kind
    if kind == "gaussian":
        g = rng.normal(mean, model.relative_std * mean, size=size)
        g = np.maximum(g, 0.0)
    elif kind == "rayleigh":
        g = rng.exponential(mean, size=size)
    elif kind == "rician":
        k = model.k_factor
        los = np.sqrt(k / (k + 1.0) * mean)
        scatter_std = np.sqrt(mean / (2.0 * (k + 1.0)))
        # in-phase/quadrature drawn as one pair per slot so chunked draws match a single draw
        z = rng.standard_normal(size=(2,) if size is None else (size, 2))
        re = los + scatter_std * z[..., 0]
        im = scatter_std * z[..., 1]
        g = re * re + im * im
    elif kind == "lognormal":
        s = model.sigma_db * np.log(10.0) / 10.0
        z = rng.standard_normal(size=size)
        if s == 0.0:
            # degenerate log-normal is exactly the mean
            g = np.full(size, mean) if size is not None else mean
        else:
            g = np.exp(np.log(mean) - 0.5 * s * s + s * z)
    else:
        raise ValueError(f"unknown channel model '{kind}'")

    if size is None:
        return float(g)
    return np.asarray(g, dtype=float)


def sample_noise(
    n0: float,
    relative_std: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> ArrayLike:
    """Per-slot Gaussian noise power around N0, truncated at a small positive floor."""
    noise = rng.normal(n0, relative_std * n0, size=size)
    noise = np.maximum(noise, NOISE_FLOOR)
    if size is None:
        return float(noise)
    return np.asarray(noise, dtype=float)


def sensed_power(
    noise: float,
    contributions: Iterable[Tuple[float, float]],
    rng: Optional[np.random.Generator] = None,
    relative_std: float = 0.0,
) -> float:
    """
    Power sensed in one sensing period: noise plus sum of g * P over active sources.

    With no rng (or zero spread) the noise term is exactly `noise`.
    """
    total = 0.0
    for gain, power in contributions:
        if gain < 0 or power < 0:
            raise ValueError("contributions must be nonnegative")
        total += gain * power
    if rng is not None and relative_std > 0:
        noise = sample_noise(noise, relative_std, rng)
    return noise + total


def sinr(
    signal_gain: float,
    p_t: float,
    interferers: Sequence[Tuple[float, float]],
    n0: float,
) -> float:
    if not n0 > 0:
        raise ValueError(f"N0 must be > 0, got {n0}")
    interference = sum(g * p for g, p in interferers)
    return signal_gain * p_t / (n0 + interference)


def transmission_success(
    signal_gain: float,
    p_t: float,
    interferers: Sequence[Tuple[float, float]],
    n0: float,
    gamma_min: float,
) -> Tuple[bool, float]:
    """
    SNR/SINR test at the receiver. Jamming is just one more interferer term.

    Returns:
        (success, gamma) with success iff gamma >= gamma_min
    """
    gamma = sinr(signal_gain, p_t, interferers, n0)
    return gamma >= gamma_min, gamma
