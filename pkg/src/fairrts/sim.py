"""Deterministic economy prototype: one Nexus, Probes, Pylons, mineral income.

The world is a single-player base-building sandbox played on a fixed-size
map for a fixed number of steps.  All state lives in :class:`GameState`
values; :func:`tick` returns a fresh state so callers can keep snapshots.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

NEXUS = "Nexus"
PROBE = "Probe"
PYLON = "Pylon"
MINERAL_FIELD = "MineralField"
UNIT_KINDS = (NEXUS, PROBE, PYLON, MINERAL_FIELD)

OWNER_SELF = "self"
OWNER_OPPONENT = "opponent"
OWNER_NEUTRAL = "neutral"

# Command verbs (the common lowering target of both action interfaces).
PRODUCE_PROBE = "ProduceProbe"
BUILD_PYLON = "BuildPylon"
COLLECT_MINERAL = "CollectMineral"
NO_OP = "NoOp"

HARVEST = "harvest"


class SimConfigError(ValueError):
    """Raised for configurations the simulation cannot run."""


@dataclass(frozen=True)
class SimConfig:
    map_w: float = 64.0
    map_h: float = 64.0
    max_steps: int = 4500
    max_entities: int = 8
    steps_per_second: int = 16
    start_minerals: int = 50
    start_probes: int = 12
    base_food_cap: int = 15
    probe_cost: int = 50
    probe_build_seconds: int = 12
    probe_food: int = 1
    pylon_cost: int = 100
    pylon_build_seconds: int = 18
    pylon_food: int = 8
    # One mineral per harvesting worker credited every income_interval
    # game-seconds.
    income_per_worker: int = 1
    income_interval_seconds: int = 1
    # Total minerals the field can yield before it is mined out.
    mineral_capacity: int = 1000
    # A probe can only start a structure within this distance of itself.
    build_range: float = 100.0
    nexus_x: float = 16.0
    nexus_y: float = 32.0
    mineral_x: float = 8.0
    mineral_y: float = 32.0
    nexus_radius: float = 2.5
    probe_radius: float = 0.5
    pylon_radius: float = 1.0
    mineral_radius: float = 1.5
    opponent_probes: int = 0

    def validate(self) -> None:
        if self.map_w <= 0 or self.map_h <= 0:
            raise SimConfigError("map size must be positive")
        if self.max_steps <= 0:
            raise SimConfigError("max_steps must be positive")
        if self.max_entities <= 0:
            raise SimConfigError("max_entities must be positive")
        if self.steps_per_second <= 0:
            raise SimConfigError("steps_per_second must be positive")
        if self.income_interval_seconds <= 0:
            raise SimConfigError("income_interval_seconds must be positive")

    @property
    def probe_build_steps(self) -> int:
        return self.probe_build_seconds * self.steps_per_second

    @property
    def pylon_build_steps(self) -> int:
        return self.pylon_build_seconds * self.steps_per_second

    def hash(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class Order:
    verb: str
    remaining_steps: int = 0
    target_tag: int | None = None


@dataclass
class Entity:
    tag: int
    kind: str
    owner: str
    x: float
    y: float
    build_progress: float | None = 1.0
    order: Order | str | None = None
    display_only: bool = False

    def radius(self, cfg: SimConfig) -> float:
        return {
            NEXUS: cfg.nexus_radius,
            PROBE: cfg.probe_radius,
            PYLON: cfg.pylon_radius,
            MINERAL_FIELD: cfg.mineral_radius,
        }[self.kind]


@dataclass(frozen=True)
class ResolvedCommand:
    verb: str
    actor_tag: int = 0
    target_location: tuple[float, float] | None = None
    target_tag: int | None = None
    # Additional actors for verbs that fan out over a multi-selection.
    extra_actor_tags: tuple[int, ...] = ()


NOOP_COMMAND = ResolvedCommand(NO_OP)


@dataclass(frozen=True)
class Event:
    kind: str  # UnitStarted | UnitCompleted | OrderRejected
    tag: int | None = None
    unit_kind: str | None = None
    reason: str | None = None


@dataclass
class GameState:
    cfg: SimConfig
    step: int = 0
    minerals: int = 0
    food_used: int = 0
    food_cap: int = 0
    entities: dict[int, Entity] = field(default_factory=dict)
    mineral_remaining: int = 0
    next_tag: int = 1
    rng_seed: int = 0
    rng_counter: int = 0
    terminal: bool = False

    def clone(self) -> "GameState":
        st = copy.copy(self)
        ents = {}
        for tag, e in self.entities.items():
            e2 = copy.copy(e)
            if isinstance(e2.order, Order):
                e2.order = copy.copy(e2.order)
            ents[tag] = e2
        st.entities = ents
        return st

    def worker_count(self) -> int:
        return sum(
            1
            for e in self.entities.values()
            if e.kind == PROBE and e.owner == OWNER_SELF
        )

    def harvesting_workers(self) -> int:
        return sum(
            1
            for e in self.entities.values()
            if e.kind == PROBE and e.owner == OWNER_SELF and e.order == HARVEST
        )


def _rng_next(state: GameState) -> float:
    """Deterministic uniform draw in [0, 1) from the state's stream."""
    h = hashlib.sha256(
        f"{state.rng_seed}:{state.rng_counter}".encode()
    ).digest()
    state.rng_counter += 1
    return int.from_bytes(h[:8], "big") / 2**64


def new_game(cfg: SimConfig, seed: int) -> GameState:
    cfg.validate()
    st = GameState(
        cfg=cfg,
        minerals=cfg.start_minerals,
        food_cap=cfg.base_food_cap,
        mineral_remaining=cfg.mineral_capacity,
        rng_seed=seed,
    )
    st.entities[st.next_tag] = Entity(
        st.next_tag, NEXUS, OWNER_SELF, cfg.nexus_x, cfg.nexus_y
    )
    st.next_tag += 1
    st.entities[st.next_tag] = Entity(
        st.next_tag, MINERAL_FIELD, OWNER_NEUTRAL, cfg.mineral_x, cfg.mineral_y
    )
    st.next_tag += 1
    for i in range(cfg.start_probes):
        angle = 2 * math.pi * i / max(cfg.start_probes, 1)
        x = cfg.mineral_x + 2.5 * math.cos(angle)
        y = cfg.mineral_y + 2.5 * math.sin(angle)
        st.entities[st.next_tag] = Entity(
            st.next_tag,
            PROBE,
            OWNER_SELF,
            _clamp(x, 0.0, cfg.map_w),
            _clamp(y, 0.0, cfg.map_h),
            order=HARVEST,
        )
        st.next_tag += 1
    for i in range(cfg.opponent_probes):
        st.entities[st.next_tag] = Entity(
            st.next_tag,
            PROBE,
            OWNER_OPPONENT,
            cfg.map_w - 8.0,
            cfg.map_h - 8.0 + 1.5 * i,
        )
        st.next_tag += 1
    st.food_used = cfg.start_probes * cfg.probe_food
    return st


def _clamp(v: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, v))


def _placement_valid(st: GameState, x: float, y: float, radius: float) -> bool:
    cfg = st.cfg
    if not (radius <= x <= cfg.map_w - radius):
        return False
    if not (radius <= y <= cfg.map_h - radius):
        return False
    for e in st.entities.values():
        if e.kind == PROBE:
            # workers move out of the way
            continue
        if math.hypot(e.x - x, e.y - y) < radius + e.radius(cfg):
            return False
    return True


def _cancel_build(st: GameState, probe: Entity) -> list[Event]:
    """Abort a probe's in-progress construction.  The unfinished pylon
    is removed and the minerals already spent are not refunded."""
    if not (isinstance(probe.order, Order) and probe.order.verb == BUILD_PYLON):
        return []
    tag = probe.order.target_tag
    probe.order = None
    if tag in st.entities:
        del st.entities[tag]
        return [Event("ConstructionCanceled", tag, unit_kind=PYLON)]
    return []


def apply_command(st: GameState, cmd: ResolvedCommand) -> list[Event]:
    """Apply a resolved command in place.  Rejections are events, not errors."""
    cfg = st.cfg
    events: list[Event] = []
    if cmd.verb == NO_OP:
        return events

    actor = st.entities.get(cmd.actor_tag)
    if actor is None or actor.owner != OWNER_SELF:
        events.append(Event("OrderRejected", cmd.actor_tag, reason="MissingActor"))
        return events

    if cmd.verb == PRODUCE_PROBE:
        if actor.kind != NEXUS:
            events.append(Event("OrderRejected", actor.tag, reason="BadActorKind"))
        elif isinstance(actor.order, Order):
            events.append(Event("OrderRejected", actor.tag, reason="ProducerBusy"))
        elif st.minerals < cfg.probe_cost:
            events.append(
                Event("OrderRejected", actor.tag, reason="InsufficientMinerals")
            )
        elif st.food_used + cfg.probe_food > st.food_cap:
            events.append(Event("OrderRejected", actor.tag, reason="FoodCapReached"))
        else:
            st.minerals -= cfg.probe_cost
            st.food_used += cfg.probe_food
            actor.order = Order(PRODUCE_PROBE, cfg.probe_build_steps)
            events.append(Event("UnitStarted", actor.tag, unit_kind=PROBE))
    elif cmd.verb == BUILD_PYLON:
        if actor.kind != PROBE:
            events.append(Event("OrderRejected", actor.tag, reason="BadActorKind"))
        elif cmd.target_location is None:
            events.append(Event("OrderRejected", actor.tag, reason="MissingTarget"))
        elif st.minerals < cfg.pylon_cost:
            events.append(
                Event("OrderRejected", actor.tag, reason="InsufficientMinerals")
            )
        else:
            x, y = cmd.target_location
            if math.hypot(actor.x - x, actor.y - y) > cfg.build_range:
                events.append(
                    Event("OrderRejected", actor.tag, reason="OutOfRange")
                )
            elif not _placement_valid(st, x, y, cfg.pylon_radius):
                events.append(
                    Event("OrderRejected", actor.tag, reason="InvalidPlacement")
                )
            else:
                events += _cancel_build(st, actor)
                st.minerals -= cfg.pylon_cost
                tag = st.next_tag
                st.next_tag += 1
                st.entities[tag] = Entity(
                    tag, PYLON, OWNER_SELF, x, y, build_progress=0.0
                )
                actor.order = Order(
                    BUILD_PYLON, cfg.pylon_build_steps, target_tag=tag
                )
                events.append(Event("UnitStarted", tag, unit_kind=PYLON))
    elif cmd.verb == COLLECT_MINERAL:
        for tag in (cmd.actor_tag,) + cmd.extra_actor_tags:
            probe = st.entities.get(tag)
            if probe is None or probe.owner != OWNER_SELF:
                events.append(Event("OrderRejected", tag, reason="MissingActor"))
            elif probe.kind != PROBE:
                events.append(
                    Event("OrderRejected", probe.tag, reason="BadActorKind")
                )
            elif probe.order != HARVEST:
                events += _cancel_build(st, probe)
                probe.order = HARVEST
    else:
        events.append(Event("OrderRejected", cmd.actor_tag, reason="UnknownVerb"))
    return events


def advance(st: GameState) -> list[Event]:
    """Advance the economy by one step in place."""
    cfg = st.cfg
    events: list[Event] = []
    income = min(
        cfg.income_per_worker * st.harvesting_workers(), st.mineral_remaining
    )
    st.step += 1
    interval = cfg.steps_per_second * cfg.income_interval_seconds
    if st.step % interval == 0:
        st.minerals += income
        st.mineral_remaining -= income
    for e in list(st.entities.values()):
        if isinstance(e.order, Order) and e.order.verb == PRODUCE_PROBE:
            e.order.remaining_steps -= 1
            if e.order.remaining_steps <= 0:
                e.order = None
                angle = 2 * math.pi * _rng_next(st)
                r = cfg.nexus_radius + cfg.probe_radius + 0.25
                tag = st.next_tag
                st.next_tag += 1
                st.entities[tag] = Entity(
                    tag,
                    PROBE,
                    OWNER_SELF,
                    _clamp(e.x + r * math.cos(angle), 0.0, cfg.map_w),
                    _clamp(e.y + r * math.sin(angle), 0.0, cfg.map_h),
                    order=HARVEST,
                )
                events.append(Event("UnitCompleted", tag, unit_kind=PROBE))
        elif isinstance(e.order, Order) and e.order.verb == BUILD_PYLON:
            e.order.remaining_steps -= 1
            pylon = st.entities.get(e.order.target_tag)
            if pylon is not None:
                pylon.build_progress = min(
                    1.0, 1.0 - e.order.remaining_steps / cfg.pylon_build_steps
                )
            if e.order.remaining_steps <= 0:
                e.order = HARVEST
                if pylon is not None:
                    pylon.build_progress = 1.0
                    st.food_cap += cfg.pylon_food
                    events.append(Event("UnitCompleted", pylon.tag, unit_kind=PYLON))
    if st.step >= cfg.max_steps:
        st.terminal = True
    return events


def tick(state: GameState, command: ResolvedCommand) -> tuple[GameState, list[Event]]:
    """Apply a command, then advance one step.  Returns a fresh state."""
    st = state.clone()
    events = apply_command(st, command)
    events += advance(st)
    return st, events


@dataclass(frozen=True)
class ViewRow:
    index: int
    tag: int
    kind: str
    features: tuple


def entity_view(state: GameState) -> list[ViewRow]:
    """Ordered, truncated own-entity list: Nexus first, then Probes by tag."""
    rows: list[ViewRow] = []
    nexus = [
        e
        for e in state.entities.values()
        if e.kind == NEXUS and e.owner == OWNER_SELF
    ]
    probes = sorted(
        (
            e
            for e in state.entities.values()
            if e.kind == PROBE and e.owner == OWNER_SELF
        ),
        key=lambda e: e.tag,
    )
    for e in nexus[:1] + probes:
        if len(rows) >= state.cfg.max_entities:
            break
        busy = 1.0 if isinstance(e.order, Order) else 0.0
        rows.append(
            ViewRow(
                index=len(rows),
                tag=e.tag,
                kind=e.kind,
                features=(e.x, e.y, e.build_progress or 0.0, busy),
            )
        )
    return rows


def reward(prev: GameState, next_state: GameState) -> int:
    return next_state.worker_count() - prev.worker_count()


def is_terminal(state: GameState) -> bool:
    return state.step >= state.cfg.max_steps


def _order_repr(order) -> tuple | str | None:
    if isinstance(order, Order):
        return (order.verb, order.remaining_steps, order.target_tag)
    return order


def serialize_state(state: GameState) -> bytes:
    """Canonical byte form of a state, for determinism hashing."""
    doc = {
        "step": state.step,
        "minerals": state.minerals,
        "mineral_remaining": state.mineral_remaining,
        "food_used": state.food_used,
        "food_cap": state.food_cap,
        "next_tag": state.next_tag,
        "rng": [state.rng_seed, state.rng_counter],
        "terminal": state.terminal,
        "config": state.cfg.hash(),
        "entities": [
            {
                "tag": e.tag,
                "kind": e.kind,
                "owner": e.owner,
                "pos": [round(e.x, 9), round(e.y, 9)],
                "progress": None
                if e.build_progress is None
                else round(e.build_progress, 9),
                "order": _order_repr(e.order),
                "display_only": e.display_only,
            }
            for e in sorted(state.entities.values(), key=lambda e: e.tag)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def state_hash(state: GameState) -> str:
    return hashlib.sha256(serialize_state(state)).hexdigest()


def state_summary(state: GameState) -> tuple:
    """Cheap fingerprint used by the effectiveness classifier."""
    return (
        state.minerals,
        state.mineral_remaining,
        state.food_used,
        state.food_cap,
        state.next_tag,
        tuple(
            (e.tag, e.kind, _order_repr(e.order), e.build_progress)
            for e in sorted(state.entities.values(), key=lambda e: e.tag)
        ),
    )
