"""Observation encoding: entity view rows plus scalar features,
normalized to [-1, 1]."""
from __future__ import annotations

import numpy as np

from ..actions import UiState
from ..sim import NEXUS, PROBE, GameState, entity_view

ENTITY_FEATURES = 7  # present, is_nexus, is_probe, x, y, progress, busy
SCALAR_FEATURES = 5  # minerals, mineral reserve, food_used, food_cap, step fraction
HUMAN_EXTRA_SCALARS = 2  # camera center


def obs_dim(interface: str, max_entities: int = 8) -> int:
    d = max_entities * ENTITY_FEATURES + SCALAR_FEATURES
    if interface == "human":
        d += max_entities + HUMAN_EXTRA_SCALARS  # selection flags + camera
    return d


def _norm(v: float, scale: float) -> float:
    return float(np.clip(v / scale, 0.0, 1.0)) * 2.0 - 1.0


def encode_observation(
    state: GameState, interface: str, ui: UiState | None = None
) -> np.ndarray:
    cfg = state.cfg
    view = entity_view(state)
    rows = np.full((cfg.max_entities, ENTITY_FEATURES), -1.0)
    selection = np.full(cfg.max_entities, -1.0)
    for row in view:
        x, y, progress, busy = row.features
        rows[row.index] = [
            1.0,
            1.0 if row.kind == NEXUS else -1.0,
            1.0 if row.kind == PROBE else -1.0,
            2.0 * x / cfg.map_w - 1.0,
            2.0 * y / cfg.map_h - 1.0,
            2.0 * progress - 1.0,
            2.0 * busy - 1.0,
        ]
        if ui is not None and row.tag in ui.selection:
            selection[row.index] = 1.0
    scalars = [
        _norm(state.minerals, 1000.0),
        _norm(state.mineral_remaining, max(cfg.mineral_capacity, 1)),
        _norm(state.food_used, 50.0),
        _norm(state.food_cap, 50.0),
        2.0 * state.step / cfg.max_steps - 1.0,
    ]
    parts = [rows.ravel(), np.asarray(scalars)]
    if interface == "human":
        cam = ui.camera if ui is not None else None
        parts.append(selection)
        parts.append(
            np.asarray(
                [
                    2.0 * cam.cx / cfg.map_w - 1.0 if cam else 0.0,
                    2.0 * cam.cy / cfg.map_h - 1.0 if cam else 0.0,
                ]
            )
        )
    return np.concatenate(parts)
