"""Block-fading channel traces and SNR-derived power budgets.

Channels are i.i.d. circularly-symmetric complex Gaussian with unit variance
(Rayleigh magnitudes, E[|h|^2] = 1).  Each (device, round) cell is generated
from its own counter block of a Philox stream keyed by (seed, device), so the
value at a cell is a pure function of (seed, device, round) and independent of
generation order or thread count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_PMAX_FACTOR = 3.0

_U64 = np.uint64(2**64 - 1)
_INV_2_53 = 2.0**-53


class ConfigError(ValueError):
    """Invalid system or experiment configuration."""


def power_from_snr(snr_db: float, sigma2: float) -> float:
    """Average power budget that realizes the target receive SNR.

    The receive SNR of a device is defined as p_bar / sigma2, hence
    p_bar = sigma2 * 10**(snr_db / 10).
    """
    if sigma2 <= 0.0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    return sigma2 * 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters: device count, rounds, budgets, noise, seed."""

    K: int
    T: int
    sigma2: float
    snr_db: float
    seed: int
    p_bar: np.ndarray = field(repr=False)  # (K,)
    p_max: np.ndarray = field(repr=False)  # (K,)

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ConfigError(f"K and T must be >= 1, got K={self.K}, T={self.T}")
        if self.sigma2 <= 0.0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        p_bar = np.asarray(self.p_bar, dtype=float).reshape(self.K).copy()
        p_max = np.asarray(self.p_max, dtype=float).reshape(self.K).copy()
        if np.any(p_bar <= 0.0):
            raise ConfigError("p_bar must be positive")
        # the average constraint is non-trivial only when p_bar < p_max
        if np.any(p_bar >= p_max):
            raise ConfigError("p_bar must be strictly below p_max for every device")
        p_bar.flags.writeable = False
        p_max.flags.writeable = False
        object.__setattr__(self, "p_bar", p_bar)
        object.__setattr__(self, "p_max", p_max)

    @classmethod
    def create(
        cls,
        K: int,
        T: int,
        snr_db: float = 10.0,
        sigma2: float = 0.1,
        seed: int = 0,
        p_bar=None,
        p_max=None,
        p_max_factor: float = DEFAULT_PMAX_FACTOR,
    ) -> "SystemConfig":
        """Build a config, deriving budgets from the SNR when not given."""
        if p_bar is None:
            p_bar = np.full(K, power_from_snr(snr_db, sigma2))
        else:
            p_bar = np.broadcast_to(np.asarray(p_bar, dtype=float), (K,)).copy()
        if p_max is None:
            p_max = p_max_factor * p_bar
        else:
            p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,)).copy()
        return cls(K=int(K), T=int(T), sigma2=float(sigma2), snr_db=float(snr_db),
                   seed=int(seed), p_bar=p_bar, p_max=p_max)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        try:
            return cls.create(
                K=d["K"],
                T=d["T"],
                snr_db=d.get("snr_db", 10.0),
                sigma2=d.get("sigma2", 0.1),
                seed=d.get("seed", 0),
                p_bar=d.get("p_bar"),
                p_max=d.get("p_max"),
                p_max_factor=d.get("p_max_factor", DEFAULT_PMAX_FACTOR),
            )
        except KeyError as exc:
            raise ConfigError(f"missing required system config field {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "T": self.T,
            "sigma2": self.sigma2,
            "snr_db": self.snr_db,
            "seed": self.seed,
            "p_bar": self.p_bar.tolist(),
            "p_max": self.p_max.tolist(),
        }


@dataclass(frozen=True)
class ChannelTrace:
    """K x T channel realizations stored as magnitude and phase."""

    magnitude: np.ndarray  # (K, T), >= 0
    phase: np.ndarray      # (K, T), in [0, 2*pi)

    def __post_init__(self):
        mag = np.asarray(self.magnitude, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if mag.ndim != 2 or mag.shape != ph.shape:
            raise ValueError(f"magnitude/phase must share a (K, T) shape, got {mag.shape} vs {ph.shape}")
        if np.any(mag < 0.0):
            raise ValueError("channel magnitudes must be non-negative")
        mag = mag.copy()
        ph = ph.copy()
        mag.flags.writeable = False
        ph.flags.writeable = False
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "phase", ph)

    @property
    def K(self) -> int:
        return self.magnitude.shape[0]

    @property
    def T(self) -> int:
        return self.magnitude.shape[1]

    def to_csv(self, path, header_comment: str | None = None) -> None:
        """Write rows (device, round, magnitude, phase)."""
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("device,round,magnitude,phase\n")
            for k in range(self.K):
                for t in range(self.T):
                    fh.write(f"{k},{t},{float(self.magnitude[k, t])!r},{float(self.phase[k, t])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "ChannelTrace":
        devices, rounds, mags, phases = read_table(
            path, ("device", "round", "magnitude", "phase"))
        K = int(max(devices)) + 1
        T = int(max(rounds)) + 1
        mag = np.zeros((K, T))
        ph = np.zeros((K, T))
        mag[np.asarray(devices, dtype=int), np.asarray(rounds, dtype=int)] = mags
        ph[np.asarray(devices, dtype=int), np.asarray(rounds, dtype=int)] = phases
        return cls(magnitude=mag, phase=ph)


def read_table(path, columns: tuple[str, ...]) -> list[np.ndarray]:
    """Read named columns from a CSV file, skipping '#' comment lines."""
    with open(path) as fh:
        header = None
        rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"no header row in {path}")
    idx = {name: header.index(name) for name in columns}
    return [np.array([float(r[idx[name]]) for r in rows]) for name in columns]


def _device_blocks(seed: int, device: int, T: int) -> np.ndarray:
    """First two 64-bit Philox words of each round's counter block, shape (T, 2).

    One Philox-4x64 block (4 words) is reserved per round; words 0 and 1 feed
    the Box-Muller transform below.
    """
    bg = np.random.Philox(key=np.array([seed & int(_U64), device & int(_U64)], dtype=np.uint64))
    raw = bg.random_raw(4 * T).reshape(T, 4)
    return raw[:, :2]


def generate_channels(cfg: SystemConfig) -> ChannelTrace:
    """Draw the i.i.d. Rayleigh-fading trace for a config, keyed by (seed, k, t)."""
    mag = np.empty((cfg.K, cfg.T))
    ph = np.empty((cfg.K, cfg.T))
    for k in range(cfg.K):
        words = _device_blocks(cfg.seed, k, cfg.T)
        # u1 in (0, 1], u2 in [0, 1): exact Box-Muller in polar form gives a
        # unit-variance complex Gaussian, i.e. magnitude sqrt(-log u1).
        u1 = ((words[:, 0] >> np.uint64(11)) + np.uint64(1)) * _INV_2_53
        u2 = (words[:, 1] >> np.uint64(11)) * _INV_2_53
        mag[k] = np.sqrt(-np.log(u1))
        ph[k] = 2.0 * np.pi * u2
    return ChannelTrace(magnitude=mag, phase=ph)


def sample_magnitudes(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Draw (n, K) i.i.d. Rayleigh magnitudes with E[|h|^2] = 1.

    Used for training-data generation where per-cell keying is not required;
    pass a dedicated stream from :func:`airfl.seeds.substream`.
    """
    z = rng.standard_normal((n, K, 2))
    return np.sqrt(0.5 * (z[..., 0] ** 2 + z[..., 1] ** 2))
