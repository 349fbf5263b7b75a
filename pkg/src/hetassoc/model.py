"""Network instances, channel sampling and per-link achievable rates.

A scenario holds one massive-MIMO macro BS plus regular-MIMO pico BSs and a
set of users.  From its geometry we draw a channel (large-scale path loss
for every link, small-scale fading power for every pico antenna) and turn it
into the K x J matrix of achievable rates ``c[k, j]`` in bits/s/Hz that every
association algorithm works on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MACRO = "macro"
PICO = "pico"

MACRO_EXPONENT = 3.5
PICO_EXPONENT = 4.0
REFERENCE_DISTANCE = 40.0
FADING_LOW, FADING_HIGH = 0.8, 1.0


def dbm_to_linear(dbm: float) -> float:
    """Transmit power in dBm -> linear power against unit noise."""
    return 10.0 ** (dbm / 10.0) / 1000.0


def linear_to_dbm(power: float) -> float:
    return 10.0 * np.log10(power * 1000.0)


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str
    position: tuple[float, float]
    antennas: int
    load_capacity: int
    tx_power: float
    path_loss_exponent: float | None = None
    rate_bias: float = 1.0

    def __post_init__(self):
        if self.kind not in (MACRO, PICO):
            raise ValueError(f"unknown BS kind {self.kind!r}")
        if self.path_loss_exponent is None:
            default = MACRO_EXPONENT if self.kind == MACRO else PICO_EXPONENT
            object.__setattr__(self, "path_loss_exponent", default)
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not 1 <= self.load_capacity <= self.antennas:
            raise ValueError(
                f"BS {self.id}: need 1 <= load ({self.load_capacity}) <= antennas ({self.antennas})"
            )
        if self.tx_power <= 0 or self.rate_bias <= 0 or self.path_loss_exponent <= 0:
            raise ValueError(f"BS {self.id}: power, bias and exponent must be positive")

    @property
    def is_macro(self) -> bool:
        return self.kind == MACRO


@dataclass(frozen=True)
class UserTerminal:
    id: int
    position: tuple[float, float]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.weight <= 0:
            raise ValueError(f"user {self.id}: weight must be positive")


@dataclass(frozen=True)
class Scenario:
    base_stations: tuple[BaseStation, ...]
    users: tuple[UserTerminal, ...]
    area: tuple[float, float] = (1000.0, 1000.0)
    coverage_radius: float = 300.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_stations", tuple(self.base_stations))
        object.__setattr__(self, "users", tuple(self.users))
        n_macro = sum(bs.is_macro for bs in self.base_stations)
        if n_macro != 1:
            raise ValueError(f"a scenario needs exactly one macro BS, got {n_macro}")
        if [bs.id for bs in self.base_stations] != list(range(len(self.base_stations))):
            raise ValueError("BS ids must be dense 0-based indices in order")
        if [u.id for u in self.users] != list(range(len(self.users))):
            raise ValueError("user ids must be dense 0-based indices in order")
        w, h = self.area
        for obj in (*self.base_stations, *self.users):
            x, y = obj.position
            if not (0 <= x <= w and 0 <= y <= h):
                raise ValueError(f"{type(obj).__name__} {obj.id} at {obj.position} lies outside the area")
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be positive")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def macro_index(self) -> int:
        return next(bs.id for bs in self.base_stations if bs.is_macro)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([bs.load_capacity for bs in self.base_stations], dtype=int)

    @property
    def weights(self) -> np.ndarray:
        return np.array([u.weight for u in self.users], dtype=float)

    def distances(self) -> np.ndarray:
        """K x J Euclidean user-BS distances in meters."""
        up = np.array([u.position for u in self.users], dtype=float).reshape(-1, 2)
        bp = np.array([bs.position for bs in self.base_stations], dtype=float).reshape(-1, 2)
        return np.linalg.norm(up[:, None, :] - bp[None, :, :], axis=-1)

    def with_rate_bias(self, bs_id: int, bias: float) -> "Scenario":
        bss = list(self.base_stations)
        b = bss[bs_id]
        bss[bs_id] = BaseStation(b.id, b.kind, b.position, b.antennas, b.load_capacity,
                                 b.tx_power, b.path_loss_exponent, bias)
        return Scenario(tuple(bss), self.users, self.area, self.coverage_radius, self.seed)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        bss = []
        for bs in self.base_stations:
            rec = {
                "id": bs.id, "kind": bs.kind, "x": bs.position[0], "y": bs.position[1],
                "antennas": bs.antennas, "load": bs.load_capacity,
                "power_dbm": round(float(linear_to_dbm(bs.tx_power)), 10),
                "rate_bias": bs.rate_bias,
            }
            default = MACRO_EXPONENT if bs.is_macro else PICO_EXPONENT
            if bs.path_loss_exponent != default:
                rec["path_loss_exponent"] = bs.path_loss_exponent
            bss.append(rec)
        return {
            "base_stations": bss,
            "users": [{"id": u.id, "x": u.position[0], "y": u.position[1], "weight": u.weight}
                      for u in self.users],
            "area": {"w": self.area[0], "h": self.area[1]},
            "coverage_radius": self.coverage_radius,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        bss = tuple(
            BaseStation(
                id=int(b["id"]), kind=b["kind"], position=(b["x"], b["y"]),
                antennas=int(b["antennas"]), load_capacity=int(b["load"]),
                tx_power=dbm_to_linear(float(b["power_dbm"])),
                path_loss_exponent=b.get("path_loss_exponent"),
                rate_bias=float(b.get("rate_bias", 1.0)),
            )
            for b in doc["base_stations"]
        )
        users = tuple(UserTerminal(int(u["id"]), (u["x"], u["y"]), float(u.get("weight", 1.0)))
                      for u in doc["users"])
        area = (float(doc["area"]["w"]), float(doc["area"]["h"]))
        return cls(bss, users, area, float(doc.get("coverage_radius", 300.0)), int(doc.get("seed", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json(Path(path).read_text())


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ChannelState:
    """Large-scale gains (K x J) and per-antenna fading power for pico BSs.

    ``small_scale_power[j]`` is a K x M_j array for pico BS ``j`` and ``None``
    for the macro, whose deterministic rate has no small-scale term.
    """

    large_scale: np.ndarray
    small_scale_power: tuple

    def __post_init__(self):
        object.__setattr__(self, "large_scale", _frozen(self.large_scale))
        object.__setattr__(self, "small_scale_power",
                           tuple(None if g is None else _frozen(g) for g in self.small_scale_power))
        if self.large_scale.ndim != 2 or len(self.small_scale_power) != self.large_scale.shape[1]:
            raise ValueError("small_scale_power needs one entry per BS column")
        if not np.all(np.isfinite(self.large_scale)) or np.any(self.large_scale < 0):
            raise ValueError("large-scale gains must be finite and nonnegative")

    def gains_sum(self) -> np.ndarray:
        """K x J array of sum_n |g_{j,k,n}|^2 (zero in the macro column)."""
        K, J = self.large_scale.shape
        out = np.zeros((K, J))
        for j, g in enumerate(self.small_scale_power):
            if g is not None:
                out[:, j] = g.sum(axis=1)
        return out


@dataclass(frozen=True)
class RateMatrix:
    rates: np.ndarray
    candidate_mask: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        mask = np.array(self.candidate_mask, dtype=bool)
        if rates.shape != mask.shape or rates.ndim != 2:
            raise ValueError("rates and candidate_mask must be K x J arrays of equal shape")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("rates must be finite and nonnegative")
        rates = np.where(mask, rates, 0.0)
        rates.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "candidate_mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rates.shape

    def masked(self, fill: float = -np.inf) -> np.ndarray:
        """Rates with non-candidate links replaced by ``fill``."""
        return np.where(self.candidate_mask, self.rates, fill)

    def to_csv(self) -> str:
        K, J = self.shape
        lines = ["user_id," + ",".join(f"bs_{j}" for j in range(J))]
        for k in range(K):
            lines.append(f"{k}," + ",".join(repr(float(v)) for v in self.rates[k]))
        return "\n".join(lines) + "\n"


def path_loss(distance, exponent):
    """Large-scale gain ``1 / (1 + (d/40)^exponent)``; accepts scalars or arrays."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    if np.any(np.asarray(exponent) <= 0):
        raise ValueError("path-loss exponent must be positive")
    out = 1.0 / (1.0 + (d / REFERENCE_DISTANCE) ** exponent)
    return float(out) if out.ndim == 0 else out


def sample_channel(scenario: Scenario, rng: np.random.Generator) -> ChannelState:
    d = scenario.distances()
    exps = np.array([bs.path_loss_exponent for bs in scenario.base_stations])
    large = path_loss(d, exps[None, :]) if d.size else np.zeros(d.shape)
    small = []
    for bs in scenario.base_stations:
        if bs.is_macro:
            small.append(None)
        else:
            small.append(rng.uniform(FADING_LOW, FADING_HIGH, size=(scenario.n_users, bs.antennas)))
    return ChannelState(np.asarray(large, dtype=float).reshape(d.shape), tuple(small))


def macro_rate(M, L, P, l_serving, interference):
    """Deterministic massive-MIMO rate in bits/s/Hz.

    ``log2(1 + (M - L + 1)/L * P * l / (1 + interference))`` where
    ``interference`` is the summed received power from all other BSs.
    """
    M = np.asarray(M)
    L = np.asarray(L)
    if np.any(L < 1) or np.any(L > M):
        raise ValueError("macro rate needs 1 <= L <= M")
    if np.any(np.asarray(P) <= 0):
        raise ValueError("transmit power must be positive")
    if np.any(np.asarray(l_serving) < 0) or np.any(np.asarray(interference) < 0):
        raise ValueError("gain and interference must be nonnegative")
    dof = (M - L + 1) / L
    out = np.log2(1.0 + dof * P * np.asarray(l_serving, dtype=float) / (1.0 + np.asarray(interference, dtype=float)))
    return float(out) if out.ndim == 0 else out


def pico_rate_worstcase(P, l, gains_sum, coverage_count):
    """Pico rate with every covered user assumed connected and interfering.

    The matched-filter gain is ``|h^H h| = l^2 * sum_n |g_n|^2``; the
    denominator charges ``coverage_count - 1`` co-served users at full power.
    """
    cnt = np.asarray(coverage_count)
    if np.any(cnt < 1):
        raise ValueError("coverage_count must be >= 1 (a user always covers itself)")
    P = np.asarray(P, dtype=float)
    l = np.asarray(l, dtype=float)
    gs = np.asarray(gains_sum, dtype=float)
    if np.any(P < 0) or np.any(l < 0) or np.any(gs < 0):
        raise ValueError("inputs must be nonnegative")
    hh = l ** 2 * gs
    out = np.log2(1.0 + P * hh ** 2 / (1.0 + (cnt - 1) * P))
    return float(out) if out.ndim == 0 else out


def coverage_mask(scenario: Scenario) -> np.ndarray:
    """K x J candidacy: the macro covers everyone, a pico covers users within the radius."""
    d = scenario.distances()
    mask = d <= scenario.coverage_radius
    mask[:, scenario.macro_index] = True
    return mask


def build_rate_matrix(scenario: Scenario, channel: ChannelState,
                      include_pico_interference: bool = True) -> RateMatrix:
    K, J = scenario.n_users, scenario.n_bs
    if channel.large_scale.shape != (K, J):
        raise ValueError(f"channel is {channel.large_scale.shape}, scenario is {(K, J)}")
    for bs, g in zip(scenario.base_stations, channel.small_scale_power):
        if bs.is_macro != (g is None) or (g is not None and g.shape != (K, bs.antennas)):
            raise ValueError(f"fading array for BS {bs.id} does not match the scenario")

    l = channel.large_scale
    mask = coverage_mask(scenario)
    rates = np.zeros((K, J))
    powers = np.array([bs.tx_power for bs in scenario.base_stations])
    received = l * powers[None, :]
    gsum = channel.gains_sum()

    for bs in scenario.base_stations:
        j = bs.id
        if bs.is_macro:
            others = np.ones(J, dtype=bool)
            others[j] = False
            if not include_pico_interference:
                others[:] = False
            interference = received[:, others].sum(axis=1)
            rates[:, j] = macro_rate(bs.antennas, bs.load_capacity, bs.tx_power, l[:, j], interference)
        else:
            cov = mask[:, j]
            n_cov = int(cov.sum())
            if n_cov:
                rates[cov, j] = pico_rate_worstcase(bs.tx_power, l[cov, j], gsum[cov, j], n_cov)
        rates[:, j] *= bs.rate_bias

    return RateMatrix(rates, mask)


def default_scenario(rng: np.random.Generator, n_users: int, *, n_bs: int = 11,
                     area: Sequence[float] = (1000.0, 1000.0), macro_antennas: int = 100,
                     macro_load: int = 10, pico_antennas: int = 4, pico_load: int = 4,
                     power_dbm: float = 40.0, pico_power_dbm: float = 40.0,
                     coverage_radius: float = 300.0, macro_bias: float = 1.0,
                     weight_set: Sequence[float] = (1.0,), seed: int = 0) -> Scenario:
    """Macro at the area center, picos and users uniform over the area."""
    w, h = float(area[0]), float(area[1])
    bss = [BaseStation(0, MACRO, (w / 2, h / 2), macro_antennas, macro_load,
                       dbm_to_linear(power_dbm), rate_bias=macro_bias)]
    pico_xy = rng.uniform((0, 0), (w, h), size=(n_bs - 1, 2))
    for i, (x, y) in enumerate(pico_xy, start=1):
        bss.append(BaseStation(i, PICO, (x, y), pico_antennas, pico_load, dbm_to_linear(pico_power_dbm)))
    user_xy = rng.uniform((0, 0), (w, h), size=(n_users, 2))
    weights = rng.choice(np.asarray(weight_set, dtype=float), size=n_users)
    users = [UserTerminal(k, (x, y), float(wt)) for k, ((x, y), wt) in enumerate(zip(user_xy, weights))]
    return Scenario(tuple(bss), tuple(users), (w, h), coverage_radius, seed)
