"""Intersection world: traffic spawning, 30 Hz stepping, observations, terminal checks."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .sliding_mode import Intention, IntentionParams, SmParams, Target, can_stop, intention_accel, sm_accel
from .topology import EGO, Crossing, PathTopology, frames_overlap, frenet_to_world

N_SLOTS = 4
_SPAWN_TRIES = 100


class SimStateError(RuntimeError):
    """Raised when a finished episode is stepped again."""


class OutcomeKind(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: OutcomeKind
    elapsed: float
    step_count: int


@dataclass
class VehicleState:
    p: float
    v: float
    a: float = 0.0


@dataclass
class TrafficVehicle:
    vid: int
    crossing: Crossing
    intention: Intention
    v_ref: float
    state: VehicleState
    committed: bool = False  # give-way vehicle that can no longer stop
    active: bool = True

    @property
    def path(self) -> int:
        return self.crossing.cross_path_index

    @property
    def delta(self) -> float:
        return self.crossing.p_cross_own - self.state.p


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 30.0
    timeout: float = 25.0
    v0_range: tuple[float, float] = (10.0, 30.0)
    d0_range: tuple[float, float] = (10.0, 55.0)
    n_traffic: tuple[int, int] = (1, 4)
    spawn_gap: float = 8.0          # min spawn spacing on a shared path
    headway: float = 6.0            # same-path following distance
    sight_range: float = 100.0
    pass_margin: float = 4.0        # a crossing counts as passed this far beyond it
    a_max: float = 5.0
    j_max: float = 10.0
    sm: SmParams = field(default_factory=SmParams)
    behaviour: IntentionParams = field(default_factory=IntentionParams)
    intentions: tuple[str, ...] = ("take_way", "give_way", "cautious")  # drawn uniformly

    def __post_init__(self):
        if not self.intentions:
            raise ValueError("at least one traffic intention is required")
        for name in self.intentions:
            Intention(name)

    @property
    def max_steps(self) -> int:
        return int(round(self.timeout / self.dt))


@dataclass(frozen=True)
class EgoObs:
    p: float
    v: float
    a: float
    delta: float


@dataclass(frozen=True)
class VehicleObs:
    exists: bool
    p: float = 0.0
    v: float = 0.0
    a: float = 0.0
    p_cross_ego: float = 0.0
    delta: float = 0.0

    @property
    def p_cross_own(self) -> float:
        return self.p + self.delta


@dataclass(frozen=True)
class Observation:
    ego: EgoObs
    vehicles: tuple[VehicleObs, ...]

    def existing(self) -> list[int]:
        return [i for i, veh in enumerate(self.vehicles) if veh.exists]


def _clamp(x: float, lim: float) -> float:
    return max(-lim, min(lim, x))


class World:
    """Mutable episode state.  Build with :func:`spawn_episode`."""

    def __init__(self, topology: PathTopology, ego: VehicleState, vehicles: list[TrafficVehicle],
                 config: SimConfig = SimConfig()):
        self.topology = topology
        self.config = config
        self.ego = ego
        self.vehicles = vehicles
        self.step_count = 0
        self.outcome: EpisodeOutcome | None = None
        self._slots: list[int | None] = [None] * N_SLOTS
        self._update_slots()

    @property
    def elapsed(self) -> float:
        return self.step_count * self.config.dt

    # -- helpers -----------------------------------------------------------

    def ego_passed(self, crossing: Crossing) -> bool:
        return self.ego.p >= crossing.p_cross_ego + self.config.pass_margin

    def ego_delta(self) -> float:
        ahead = [c.p_cross_ego for c in self.topology.crossings if not self.ego_passed(c)]
        ref = min(ahead) if ahead else max(c.p_cross_ego for c in self.topology.crossings)
        return ref - self.ego.p

    def _visible(self, veh: TrafficVehicle) -> bool:
        if not veh.active:
            return False
        ex, ey = self.topology.ego_path.point(self.ego.p)
        vx, vy = self.topology.path(veh.path).point(veh.state.p)
        return math.hypot(vx - ex, vy - ey) <= self.config.sight_range

    def _update_slots(self):
        by_id = {veh.vid: veh for veh in self.vehicles}
        # a despawned vehicle frees its slot; an out-of-sight one keeps it
        for i, vid in enumerate(self._slots):
            if vid is not None and not by_id[vid].active:
                self._slots[i] = None
        taken = {vid for vid in self._slots if vid is not None}
        fresh = sorted((veh for veh in self.vehicles if veh.vid not in taken and self._visible(veh)),
                       key=lambda veh: (abs(veh.delta), veh.vid))
        for veh in fresh:
            if None not in self._slots:
                break
            self._slots[self._slots.index(None)] = veh.vid

    def slot_vehicle(self, slot: int) -> TrafficVehicle | None:
        vid = self._slots[slot]
        if vid is None:
            return None
        veh = next(v for v in self.vehicles if v.vid == vid)
        return veh if self._visible(veh) else None

    # -- observation -------------------------------------------------------

    def observe(self) -> Observation:
        ego = EgoObs(self.ego.p, self.ego.v, self.ego.a, self.ego_delta())
        slots = []
        for i in range(N_SLOTS):
            veh = self.slot_vehicle(i)
            if veh is None:
                slots.append(VehicleObs(False))
            else:
                s = veh.state
                slots.append(VehicleObs(True, s.p, s.v, s.a, veh.crossing.p_cross_ego, veh.delta))
        return Observation(ego, tuple(slots))

    # -- dynamics ----------------------------------------------------------

    def _traffic_accel(self, veh: TrafficVehicle) -> float:
        cfg = self.config
        s = veh.state
        params = replace(cfg.sm, v_max=veh.v_ref, a_max=cfg.a_max)
        if veh.intention is Intention.GIVE_WAY and not veh.committed:
            if not can_stop(s.p, s.v, veh.crossing.p_cross_own, cfg.a_max, cfg.behaviour):
                veh.committed = True
        clear = veh.committed or self.ego_passed(veh.crossing)
        a = intention_accel(veh.intention, params, s.p, s.v, veh.crossing.p_cross_own, clear,
                            cfg.behaviour, cfg.dt)
        leaders = [o for o in self.vehicles
                   if o.active and o is not veh and o.path == veh.path and o.state.p > s.p]
        if leaders:
            lead = min(leaders, key=lambda o: o.state.p)
            a = min(a, sm_accel(params, s.p, s.v, Target(lead.state.p - cfg.headway, lead.state.v)))
        return _clamp(a, cfg.a_max)

    def _step_ego(self, jerk: float):
        dt, e = self.config.dt, self.ego
        p = e.p + dt * e.v + dt**2 / 2 * e.a + dt**3 / 6 * jerk
        v = e.v + dt * e.a + dt**2 / 2 * jerk
        a = _clamp(e.a + dt * jerk, self.config.a_max)
        if v < 0.0:
            # standstill: no reversing
            v, a, p = 0.0, max(a, 0.0), max(p, e.p)
        e.p, e.v, e.a = p, v, a

    def step(self, jerk: float) -> tuple[Observation, EpisodeOutcome | None]:
        """Advance one sample period under the ego jerk command."""
        if self.outcome is not None:
            raise SimStateError("episode already terminated")
        cfg = self.config
        if not abs(jerk) <= cfg.j_max + 1e-9:
            raise ValueError(f"|jerk| = {abs(jerk):.6g} exceeds j_max = {cfg.j_max}")
        active = [veh for veh in self.vehicles if veh.active]
        accels = [self._traffic_accel(veh) for veh in active]
        for veh, a in zip(active, accels):
            s = veh.state
            v_new = max(s.v + a * cfg.dt, 0.0)
            s.p += cfg.dt * (s.v + v_new) / 2
            s.v, s.a = v_new, a
            if s.p > self.topology.path(veh.path).length:
                veh.active = False
        self._step_ego(jerk)
        self.step_count += 1
        self.outcome = self._terminal()
        self._update_slots()
        return self.observe(), self.outcome

    def collides(self) -> bool:
        ego = frenet_to_world(self.topology, EGO, min(self.ego.p, self.topology.ego_path.length))
        return any(frames_overlap(ego, frenet_to_world(self.topology, veh.path, veh.state.p))
                   for veh in self.vehicles if veh.active)

    def _terminal(self) -> EpisodeOutcome | None:
        kind = None
        if self.collides():
            kind = OutcomeKind.FAILURE
        elif self.ego.p >= self.topology.goal_position:
            kind = OutcomeKind.SUCCESS
        elif self.step_count >= self.config.max_steps:
            kind = OutcomeKind.TIMEOUT
        return None if kind is None else EpisodeOutcome(kind, self.elapsed, self.step_count)

    # -- export ------------------------------------------------------------

    def snapshot(self) -> dict:
        """Flat per-step record for trace files (fixed columns per episode)."""
        row = {"step": self.step_count, "time": self.elapsed,
               "ego_p": self.ego.p, "ego_v": self.ego.v, "ego_a": self.ego.a}
        for veh in self.vehicles:
            tag = f"veh{veh.vid}"
            row[f"{tag}_intention"] = veh.intention.value
            row[f"{tag}_active"] = int(veh.active)
            row[f"{tag}_p"] = veh.state.p
            row[f"{tag}_v"] = veh.state.v
            row[f"{tag}_a"] = veh.state.a
        return row


def spawn_episode(topology: PathTopology, rng_seed: int, config: SimConfig = SimConfig()) -> World:
    """Random ego start and 1-4 traffic vehicles; bit-exact for a given seed."""
    rng = np.random.default_rng(rng_seed)
    lo_v, hi_v = config.v0_range
    lo_d, hi_d = config.d0_range
    first = min(c.p_cross_ego for c in topology.crossings)
    ego = VehicleState(first - float(rng.uniform(lo_d, hi_d)), float(rng.uniform(lo_v, hi_v)), 0.0)
    n = int(rng.integers(config.n_traffic[0], config.n_traffic[1] + 1))
    kinds = [Intention(name) for name in config.intentions]
    vehicles: list[TrafficVehicle] = []
    for _ in range(n):
        crossing = topology.crossings[int(rng.integers(topology.n_crossings))]
        intention = kinds[int(rng.integers(len(kinds)))]
        v0 = float(rng.uniform(lo_v, hi_v))
        same = [o.state.p for o in vehicles if o.path == crossing.cross_path_index]
        for _ in range(_SPAWN_TRIES):
            p0 = crossing.p_cross_own - float(rng.uniform(lo_d, hi_d))
            if all(abs(p0 - q) >= config.spawn_gap for q in same):
                vehicles.append(TrafficVehicle(len(vehicles), crossing, intention, v0,
                                               VehicleState(p0, v0, 0.0)))
                break
        # a path whose spawn band is fully blocked gets no extra vehicle
    return World(topology, ego, vehicles, config)
