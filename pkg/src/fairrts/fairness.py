"""Constraint middleware: problem-spec DSL, EPM rate limiting,
effectiveness classification, camera filters, and precision-error
injection."""
from __future__ import annotations

import math
import random
import re
from collections import deque
from dataclasses import dataclass, replace

from . import sim
from .actions import (
    CAMERA_REAL,
    CAMERA_VIRTUAL,
    Camera,
    HumanAction,
    RAW_KINDS,
    HUMAN_KINDS,
    PIXELS_PER_UNIT,
    RawAction,
    SCREEN_H,
    SCREEN_W,
    UiState,
)
from .sim import GameState, OWNER_SELF, state_summary


class SpecParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


@dataclass(frozen=True)
class ProblemSpec:
    """Constraint tuple: interface, human-data level, EPM cap, camera
    mode, control precision.

    ``human_data_level`` is carried and reported but drives no behavior
    here (there is no supervised or imitation pipeline in this
    artifact).
    """

    interface: str = "raw"  # raw | human
    human_data_level: int = 0
    epm_limit: int | None = None
    camera_mode: str | None = None  # C0 | C1 | None
    precision: float = 1.0

    def __post_init__(self):
        if self.interface not in ("raw", "human"):
            raise ValueError(f"bad interface {self.interface!r}")
        if not 0 <= self.human_data_level <= 3:
            raise ValueError("human_data_level must be 0..3")
        if not 0.0 < self.precision <= 1.0:
            raise ValueError("precision must be in (0, 1]")


_SPEC_RE = re.compile(
    r"^SC\^(?P<iface>[rh])_(?P<level>[0-3])\{(?P<body>[^{}]*)\}$"
)
_CLAUSE_E = re.compile(r"^E_(\d+)$")
_CLAUSE_C = re.compile(r"^C_([01])$")
_CLAUSE_P = re.compile(r"^P_(\d\.\d\d)$")


def parse_spec(text: str) -> ProblemSpec:
    """Parse ``SC^<r|h>_<0..3>{E_<int>, C_<0|1>, P_<d.dd>}``.

    The E/C/P clauses are each optional and order-insensitive.
    """
    m = _SPEC_RE.match(text)
    if m is None:
        # locate the first offending character for the error message
        expect = "SC^"
        for i, ch in enumerate(text):
            if i < len(expect) and ch != expect[i]:
                raise SpecParseError(f"expected {expect[i]!r}", i)
        if len(text) < 3:
            raise SpecParseError("truncated spec", len(text))
        if len(text) > 3 and text[3] not in "rh":
            raise SpecParseError("superscript must be r or h", 3)
        if len(text) > 4 and text[4] != "_":
            raise SpecParseError("expected '_'", 4)
        if len(text) > 5 and text[5] not in "0123":
            raise SpecParseError("subscript must be 0..3", 5)
        raise SpecParseError("malformed spec", min(6, len(text)))
    iface = "raw" if m.group("iface") == "r" else "human"
    level = int(m.group("level"))
    body = m.group("body")
    epm = None
    camera = None
    precision = 1.0
    seen: set[str] = set()
    if body.strip():
        offset = text.index("{") + 1
        for part in body.split(","):
            clause = part.strip()
            pos = offset + part.index(clause[0]) if clause else offset
            offset += len(part) + 1
            if not clause:
                raise SpecParseError("empty clause", pos)
            key = clause[0]
            if key in seen:
                raise SpecParseError(f"duplicate clause {key}", pos)
            if cm := _CLAUSE_E.match(clause):
                epm = int(cm.group(1))
                if epm <= 0:
                    raise SpecParseError("E must be positive", pos)
            elif cm := _CLAUSE_C.match(clause):
                camera = CAMERA_REAL if cm.group(1) == "0" else CAMERA_VIRTUAL
            elif cm := _CLAUSE_P.match(clause):
                precision = float(cm.group(1))
                if not 0.0 < precision <= 1.0:
                    raise SpecParseError("P must be in (0, 1]", pos)
            else:
                raise SpecParseError(f"unknown clause {clause!r}", pos)
            seen.add(key)
    return ProblemSpec(iface, level, epm, camera, precision)


def format_spec(spec: ProblemSpec) -> str:
    clauses = []
    if spec.epm_limit is not None:
        clauses.append(f"E_{spec.epm_limit}")
    if spec.camera_mode is not None:
        clauses.append(f"C_{0 if spec.camera_mode == CAMERA_REAL else 1}")
    # precision is always printed; 1.00 means unconstrained
    clauses.append(f"P_{spec.precision:.2f}")
    iface = "r" if spec.interface == "raw" else "h"
    return f"SC^{iface}_{spec.human_data_level}{{{', '.join(clauses)}}}"


PRESETS = {
    "level1": "SC^r_3{E_180, C_1, P_1.00}",
    "level2": "SC^r_2{E_160, C_1, P_0.95}",
    "level3": "SC^h_1{E_140, C_0, P_0.90}",
    "level4": "SC^h_0{E_120, C_0, P_0.85}",
}


def epm_cap(epm_limit: int, window_seconds: int = 5) -> int:
    """Admitted-action cap per trailing window: round(x * W / 60),
    half away from zero."""
    return int(math.floor(epm_limit * window_seconds / 60.0 + 0.5))


class RateLimiter:
    """Sliding-window EPM limiter over game steps.

    Tracks admitted-action timestamps in a trailing window of
    ``window_seconds``; an action is admitted iff fewer than the cap
    were admitted in that window.  ``epm_limit=None`` admits
    everything.
    """

    WINDOW_SECONDS = 5

    def __init__(self, epm_limit: int | None, steps_per_second: int = 16):
        self.epm_limit = epm_limit
        self.steps_per_second = steps_per_second
        self.window_steps = self.WINDOW_SECONDS * steps_per_second
        self.cap = (
            None if epm_limit is None else epm_cap(epm_limit, self.WINDOW_SECONDS)
        )
        self.admitted: deque[int] = deque()

    def admit(self, now: int) -> bool:
        if self.cap is None:
            return True
        while self.admitted and self.admitted[0] <= now - self.window_steps:
            self.admitted.popleft()
        if len(self.admitted) >= self.cap:
            return False
        self.admitted.append(now)
        return True


def _ui_summary(ui: UiState | None):
    if ui is None:
        return None
    return (ui.selection, ui.camera.cx, ui.camera.cy)


def classify_effective(
    pre_state: GameState,
    post_state: GameState,
    pre_ui: UiState | None,
    post_ui: UiState | None,
    action=None,
) -> bool:
    """True iff the action changed authoritative state or UI state.

    The post states must be taken right after applying the action,
    before the economy advances, so the action's own effect is
    isolated.
    """
    if state_summary(pre_state) != state_summary(post_state):
        return True
    return _ui_summary(pre_ui) != _ui_summary(post_ui)


@dataclass(frozen=True)
class Observation:
    """Filtered view of a state: visible entities plus minimap grids
    (occupancy grids only present for the real camera)."""

    entities: tuple[sim.Entity, ...]
    minimap_own: tuple[tuple[int, ...], ...] | None = None
    minimap_opponent: tuple[tuple[int, ...], ...] | None = None


def _stub(e: sim.Entity) -> sim.Entity:
    return sim.Entity(
        tag=e.tag,
        kind=e.kind,
        owner=e.owner,
        x=e.x,
        y=e.y,
        build_progress=None,
        order=None,
        display_only=True,
    )


def virtual_camera_filter(state: GameState, camera: Camera) -> Observation:
    """Own and neutral entities pass through untouched; opponent
    entities outside the camera are reduced to display-only stubs."""
    out = []
    for e in state.entities.values():
        if e.owner == sim.OWNER_OPPONENT and not camera.contains(e.x, e.y):
            out.append(_stub(e))
        else:
            out.append(e)
    return Observation(entities=tuple(out))


MINIMAP_CELLS = 16


def _occupancy(state: GameState, owner: str) -> tuple[tuple[int, ...], ...]:
    cfg = state.cfg
    grid = [[0] * MINIMAP_CELLS for _ in range(MINIMAP_CELLS)]
    for e in state.entities.values():
        if e.owner != owner:
            continue
        cx = min(int(e.x * MINIMAP_CELLS / cfg.map_w), MINIMAP_CELLS - 1)
        cy = min(int(e.y * MINIMAP_CELLS / cfg.map_h), MINIMAP_CELLS - 1)
        grid[cy][cx] += 1
    return tuple(tuple(row) for row in grid)


def real_camera_filter(state: GameState, camera: Camera) -> Observation:
    """Screen shows only entities whose center lies inside the camera;
    the minimap is a coarse per-owner occupancy grid of the whole map."""
    visible = tuple(
        e for e in state.entities.values() if camera.contains(e.x, e.y)
    )
    return Observation(
        entities=visible,
        minimap_own=_occupancy(state, OWNER_SELF),
        minimap_opponent=_occupancy(state, sim.OWNER_OPPONENT),
    )


def move_camera_click(
    camera: Camera, minimap_point: tuple[float, float], map_w: float, map_h: float
) -> Camera:
    from .actions import minimap_to_world

    wx, wy = minimap_to_world(minimap_point, map_w, map_h)
    return replace(camera, cx=wx, cy=wy).clamped(map_w, map_h)


def move_camera_scroll(
    camera: Camera,
    direction: tuple[float, float],
    dt: float,
    map_w: float,
    map_h: float,
    speed: float = 12.0,
) -> Camera:
    dx, dy = direction
    norm = math.hypot(dx, dy)
    if norm > 0:
        dx, dy = dx / norm, dy / norm
    return replace(
        camera, cx=camera.cx + dx * speed * dt, cy=camera.cy + dy * speed * dt
    ).clamped(map_w, map_h)


ASPECT_KIND = "kind"
ASPECT_SELECTION = "selection"
ASPECT_TARGET = "target"
ASPECTS = (ASPECT_KIND, ASPECT_SELECTION, ASPECT_TARGET)


@dataclass(frozen=True)
class PrecisionConfig:
    p: float = 1.0
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    jitter_radius: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def _jitter(rng: random.Random, p: tuple[float, float], radius: float):
    while True:
        dx = rng.uniform(-radius, radius)
        dy = rng.uniform(-radius, radius)
        if dx * dx + dy * dy <= radius * radius:
            return p[0] + dx, p[1] + dy


def _perturb_kind(rng: random.Random, action):
    kinds = RAW_KINDS if isinstance(action, RawAction) else HUMAN_KINDS
    others = [k for k in kinds if k != action.kind]
    return replace(action, kind=rng.choice(others))


def _perturb_selection(rng: random.Random, action, max_entities: int):
    if isinstance(action, RawAction):
        idx = action.selected_index
        neighbors = [i for i in (idx - 1, idx + 1) if 0 <= i < max_entities]
        if not neighbors:
            return None
        return replace(action, selected_index=rng.choice(neighbors))
    if action.screen_point is None:
        return None
    step = PIXELS_PER_UNIT  # one game unit on screen
    dx, dy = rng.choice([(-step, 0), (step, 0), (0, -step), (0, step)])
    x = min(max(action.screen_point[0] + dx, 0.0), float(SCREEN_W))
    y = min(max(action.screen_point[1] + dy, 0.0), float(SCREEN_H))
    return replace(action, screen_point=(x, y))


def _perturb_target(rng: random.Random, action, cfg: PrecisionConfig):
    if isinstance(action, RawAction):
        if action.target_location is None:
            return None
        return replace(
            action,
            target_location=_jitter(rng, action.target_location, cfg.jitter_radius),
        )
    if action.screen_point is None:
        return None
    jittered = _jitter(
        rng, action.screen_point, cfg.jitter_radius * PIXELS_PER_UNIT
    )
    x = min(max(jittered[0], 0.0), float(SCREEN_W))
    y = min(max(jittered[1], 0.0), float(SCREEN_H))
    return replace(action, screen_point=(x, y))


def inject_precision_error(
    rng: random.Random,
    action,
    cfg: PrecisionConfig,
    max_entities: int = 8,
):
    """With probability 1-p, perturb exactly one aspect of the action.

    The aspect is drawn from the configured weights; an aspect that does
    not apply to the action falls through to the next one, and if none
    applies the action is returned unchanged.
    """
    if rng.random() < cfg.p:
        return action
    u = rng.random()
    acc = 0.0
    start = len(ASPECTS) - 1
    for i, w in enumerate(cfg.weights):
        acc += w
        if u < acc:
            start = i
            break
    for off in range(len(ASPECTS)):
        aspect = ASPECTS[(start + off) % len(ASPECTS)]
        if aspect == ASPECT_KIND:
            return _perturb_kind(rng, action)
        if aspect == ASPECT_SELECTION:
            out = _perturb_selection(rng, action, max_entities)
        else:
            out = _perturb_target(rng, action, cfg)
        if out is not None:
            return out
    return action
