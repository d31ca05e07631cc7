"""Raw and human action interfaces, both lowering to ResolvedCommand.

The raw interface addresses entities by their row index in the entity
view and never needs a selection or a camera.  The human interface works
like a player: select units through screen coordinates, then issue the
command, moving the camera when something is off screen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .sim import (
    BUILD_PYLON,
    COLLECT_MINERAL,
    NEXUS,
    OWNER_SELF,
    PROBE,
    PRODUCE_PROBE,
    GameState,
    ResolvedCommand,
    entity_view,
)

RAW_KINDS = (BUILD_PYLON, PRODUCE_PROBE, COLLECT_MINERAL)

SELECT_POINT = "SelectPoint"
SELECT_RECT = "SelectRect"
MOVE_CAMERA = "MoveCamera"
HUMAN_KINDS = RAW_KINDS + (SELECT_POINT, SELECT_RECT, MOVE_CAMERA)
CAMERA_KINDS = (MOVE_CAMERA,)

# Logical screen resolution; preserves the 32:20 camera aspect at 8 px
# per game unit.
SCREEN_W = 256
SCREEN_H = 160
PIXELS_PER_UNIT = SCREEN_W / 32.0

# Minimap resolution in logical pixels; the minimap always shows the
# whole map.
MINIMAP_W = 64
MINIMAP_H = 64

SELECTION_RADIUS = 1.5

CAMERA_REAL = "C0"
CAMERA_VIRTUAL = "C1"


class ResolveError(Exception):
    """An action that cannot be lowered to a command.

    ``code`` is one of InvalidIndex, IncompatibleActor, MissingTarget,
    NoSelection, OutOfScreen, NothingSelected.  For NothingSelected the
    ``ui`` attribute carries the post-action UI state (selection
    cleared).
    """

    def __init__(self, code: str, message: str = "", ui: "UiState | None" = None):
        super().__init__(message or code)
        self.code = code
        self.ui = ui


@dataclass(frozen=True)
class RawAction:
    kind: str
    selected_index: int
    target_location: tuple[float, float] | None = None


@dataclass(frozen=True)
class HumanAction:
    kind: str
    screen_point: tuple[float, float] | None = None
    screen_rect: tuple[float, float, float, float] | None = None  # x0,y0,x1,y1
    minimap_point: tuple[float, float] | None = None
    scroll_direction: tuple[float, float] | None = None


@dataclass(frozen=True)
class Camera:
    cx: float
    cy: float
    width: float = 32.0
    height: float = 20.0

    def clamped(self, map_w: float, map_h: float) -> "Camera":
        cx = min(max(self.cx, self.width / 2), map_w - self.width / 2)
        cy = min(max(self.cy, self.height / 2), map_h - self.height / 2)
        return replace(self, cx=cx, cy=cy)

    def contains(self, x: float, y: float) -> bool:
        return (
            abs(x - self.cx) <= self.width / 2
            and abs(y - self.cy) <= self.height / 2
        )


@dataclass(frozen=True)
class UiState:
    selection: frozenset[int] = frozenset()
    camera: Camera = field(default_factory=lambda: Camera(16.0, 32.0))


def initial_ui(state: GameState) -> UiState:
    """Empty selection and a seed-determined starting viewport.

    The camera starts somewhere on the map rather than over the base,
    so an agent on the human interface has to manage the viewport
    instead of inheriting screen coordinates that happen to work.
    """
    from .sim import _rng_next

    cam = Camera(
        _rng_next(state) * state.cfg.map_w,
        _rng_next(state) * state.cfg.map_h,
    ).clamped(state.cfg.map_w, state.cfg.map_h)
    return UiState(camera=cam)


def screen_to_world(camera: Camera, p: tuple[float, float]) -> tuple[float, float]:
    x, y = p
    if not (0 <= x <= SCREEN_W and 0 <= y <= SCREEN_H):
        raise ResolveError("OutOfScreen", f"screen point {p} outside screen")
    wx = camera.cx - camera.width / 2 + x * camera.width / SCREEN_W
    wy = camera.cy - camera.height / 2 + y * camera.height / SCREEN_H
    return wx, wy


def world_to_screen(camera: Camera, p: tuple[float, float]) -> tuple[float, float]:
    wx, wy = p
    if not camera.contains(wx, wy):
        raise ResolveError("OutOfScreen", f"world point {p} outside camera")
    x = (wx - (camera.cx - camera.width / 2)) * SCREEN_W / camera.width
    y = (wy - (camera.cy - camera.height / 2)) * SCREEN_H / camera.height
    return x, y


def minimap_to_world(
    p: tuple[float, float], map_w: float, map_h: float
) -> tuple[float, float]:
    mx, my = p
    if not (0 <= mx <= MINIMAP_W and 0 <= my <= MINIMAP_H):
        raise ResolveError("OutOfScreen", f"minimap point {p} outside minimap")
    return mx * map_w / MINIMAP_W, my * map_h / MINIMAP_H


VERBS_BY_KIND = {
    NEXUS: frozenset({PRODUCE_PROBE}),
    PROBE: frozenset({BUILD_PYLON, COLLECT_MINERAL}),
}


def unit_type_action_mask(state: GameState, view=None) -> list[frozenset[str]]:
    """Per-index set of verbs compatible with the unit kind at that index."""
    if view is None:
        view = entity_view(state)
    return [VERBS_BY_KIND.get(row.kind, frozenset()) for row in view]


def resolve_raw(state: GameState, action: RawAction) -> ResolvedCommand:
    view = entity_view(state)
    if not 0 <= action.selected_index < len(view):
        raise ResolveError(
            "InvalidIndex", f"index {action.selected_index} outside view"
        )
    row = view[action.selected_index]
    if action.kind not in VERBS_BY_KIND.get(row.kind, frozenset()):
        raise ResolveError(
            "IncompatibleActor", f"{action.kind} on a {row.kind}"
        )
    if action.kind == BUILD_PYLON:
        if action.target_location is None:
            raise ResolveError("MissingTarget", "BuildPylon needs a location")
        return ResolvedCommand(
            BUILD_PYLON, row.tag, target_location=action.target_location
        )
    return ResolvedCommand(action.kind, row.tag)


def _selectable(state: GameState, camera: Camera, camera_mode: str | None):
    for e in state.entities.values():
        if e.owner != OWNER_SELF:
            continue
        if camera_mode == CAMERA_REAL and not camera.contains(e.x, e.y):
            continue
        yield e


def resolve_human(
    state: GameState,
    ui: UiState,
    action: HumanAction,
    camera_mode: str | None = None,
    scroll_dt: float = 0.5,
    scroll_speed: float = 12.0,
) -> tuple[UiState, ResolvedCommand | None]:
    """Lower a human action.  Returns the next UI state and, for command
    kinds, the resolved command.  Selection kinds return (ui, None)."""
    cfg = state.cfg
    # prune dead selected tags
    live = frozenset(
        t
        for t in ui.selection
        if t in state.entities and state.entities[t].owner == OWNER_SELF
    )
    if live != ui.selection:
        ui = replace(ui, selection=live)

    if action.kind == SELECT_POINT:
        if action.screen_point is None:
            raise ResolveError("MissingTarget", "SelectPoint needs a point")
        wx, wy = screen_to_world(ui.camera, action.screen_point)
        best = None
        for e in _selectable(state, ui.camera, camera_mode):
            d = math.hypot(e.x - wx, e.y - wy)
            if d <= SELECTION_RADIUS and (
                best is None or (d, e.tag) < (best[0], best[1].tag)
            ):
                best = (d, e)
        if best is None:
            raise ResolveError(
                "NothingSelected",
                "no unit within selection radius",
                ui=replace(ui, selection=frozenset()),
            )
        return replace(ui, selection=frozenset({best[1].tag})), None

    if action.kind == SELECT_RECT:
        if action.screen_rect is None:
            raise ResolveError("MissingTarget", "SelectRect needs a rectangle")
        x0, y0, x1, y1 = action.screen_rect
        wx0, wy0 = screen_to_world(ui.camera, (min(x0, x1), min(y0, y1)))
        wx1, wy1 = screen_to_world(ui.camera, (max(x0, x1), max(y0, y1)))
        tags = frozenset(
            e.tag
            for e in _selectable(state, ui.camera, camera_mode)
            if wx0 <= e.x <= wx1 and wy0 <= e.y <= wy1
        )
        return replace(ui, selection=tags), None

    if action.kind == MOVE_CAMERA:
        from .fairness import move_camera_click, move_camera_scroll

        if action.minimap_point is not None:
            cam = move_camera_click(
                ui.camera, action.minimap_point, cfg.map_w, cfg.map_h
            )
        elif action.scroll_direction is not None:
            cam = move_camera_scroll(
                ui.camera,
                action.scroll_direction,
                scroll_dt,
                cfg.map_w,
                cfg.map_h,
                speed=scroll_speed,
            )
        else:
            raise ResolveError("MissingTarget", "MoveCamera needs a point or direction")
        return replace(ui, camera=cam), None

    # command kinds operate on the current selection
    if action.kind not in RAW_KINDS:
        raise ResolveError("IncompatibleActor", f"unknown kind {action.kind}")
    if not ui.selection:
        raise ResolveError("NoSelection", f"{action.kind} with empty selection")
    compatible = sorted(
        t
        for t in ui.selection
        if action.kind in VERBS_BY_KIND.get(state.entities[t].kind, frozenset())
    )
    if not compatible:
        raise ResolveError(
            "IncompatibleActor", f"no selected unit can {action.kind}"
        )
    actor = compatible[0]
    if action.kind == BUILD_PYLON:
        if action.screen_point is None:
            raise ResolveError("MissingTarget", "BuildPylon needs a screen point")
        loc = screen_to_world(ui.camera, action.screen_point)
        return ui, ResolvedCommand(BUILD_PYLON, actor, target_location=loc)
    if action.kind == COLLECT_MINERAL:
        # fans out over the whole compatible selection
        return ui, ResolvedCommand(
            COLLECT_MINERAL, actor, extra_actor_tags=tuple(compatible[1:])
        )
    return ui, ResolvedCommand(action.kind, actor)


@dataclass(frozen=True)
class ActionSpaceConfig:
    max_entities: int = 8
    placement_grid_w: int = 64
    placement_grid_h: int = 64
    screen_w: int = SCREEN_W
    screen_h: int = SCREEN_H
    minimap_w: int = MINIMAP_W
    minimap_h: int = MINIMAP_H
    macro_count: int = 0


def action_space_size(interface: str, cfg: ActionSpaceConfig) -> int:
    """Flat cardinality of the composite action space.

    Counting rule: each action kind contributes the product of its
    argument cardinalities.  Raw kinds take an entity index; BuildPylon
    additionally takes a cell of the placement grid.  Human kinds take
    screen geometry instead of an index: a screen point for BuildPylon
    and SelectPoint, an ordered pair of screen points for SelectRect, a
    minimap point for MoveCamera, and no argument for ProduceProbe and
    CollectMineral.  Macro counts the configured macros.
    """
    if interface == "raw":
        grid = cfg.placement_grid_w * cfg.placement_grid_h
        return (
            cfg.max_entities  # ProduceProbe
            + cfg.max_entities  # CollectMineral
            + cfg.max_entities * grid  # BuildPylon
        )
    if interface == "human":
        s = cfg.screen_w * cfg.screen_h
        m = cfg.minimap_w * cfg.minimap_h
        return (
            1  # ProduceProbe
            + 1  # CollectMineral
            + s  # BuildPylon
            + s  # SelectPoint
            + s * s  # SelectRect
            + m  # MoveCamera
        )
    if interface == "macro":
        return cfg.macro_count
    raise ValueError(f"unknown interface {interface!r}")


def enumerate_action_space(interface: str, cfg: ActionSpaceConfig):
    """Exhaustive enumeration matching the counting rule (small configs)."""
    if interface == "raw":
        for idx in range(cfg.max_entities):
            yield (PRODUCE_PROBE, idx)
            yield (COLLECT_MINERAL, idx)
            for gx in range(cfg.placement_grid_w):
                for gy in range(cfg.placement_grid_h):
                    yield (BUILD_PYLON, idx, gx, gy)
    elif interface == "human":
        screen = [
            (x, y) for x in range(cfg.screen_w) for y in range(cfg.screen_h)
        ]
        minimap = [
            (x, y) for x in range(cfg.minimap_w) for y in range(cfg.minimap_h)
        ]
        yield (PRODUCE_PROBE,)
        yield (COLLECT_MINERAL,)
        for p in screen:
            yield (BUILD_PYLON, p)
        for p in screen:
            yield (SELECT_POINT, p)
        for p in screen:
            for q in screen:
                yield (SELECT_RECT, p, q)
        for p in minimap:
            yield (MOVE_CAMERA, p)
    elif interface == "macro":
        for i in range(cfg.macro_count):
            yield ("Macro", i)
    else:
        raise ValueError(f"unknown interface {interface!r}")
