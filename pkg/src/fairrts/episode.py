"""Episode runner: wires the simulation, the action interfaces, and the
fairness middleware together, producing rewards and replay records."""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

from .actions import (
    CAMERA_KINDS,
    HumanAction,
    RawAction,
    ResolveError,
    UiState,
    initial_ui,
    resolve_human,
    resolve_raw,
)
from .fairness import (
    PrecisionConfig,
    ProblemSpec,
    RateLimiter,
    classify_effective,
    inject_precision_error,
)
from .replay import SIDE_AGENT, ActionRecord
from .sim import (
    NOOP_COMMAND,
    NO_OP,
    GameState,
    SimConfig,
    advance,
    apply_command,
    is_terminal,
    new_game,
    reward,
)


def _payload(action) -> str:
    doc = {"type": type(action).__name__}
    doc.update({k: v for k, v in asdict(action).items() if v is not None})
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


@dataclass
class StepResult:
    reward: int
    record: ActionRecord
    events: list = field(default_factory=list)


class EpisodeRunner:
    """Runs one episode under a problem spec's constraints.

    The agent acts once every ``step_mul`` simulation steps; actions
    pass through precision-error injection, the EPM gate, and interface
    resolution before reaching the engine.
    """

    def __init__(
        self,
        sim_cfg: SimConfig,
        spec: ProblemSpec,
        seed: int,
        step_mul: int = 8,
        side: str = SIDE_AGENT,
    ):
        self.spec = spec
        self.step_mul = step_mul
        self.side = side
        self.state: GameState = new_game(sim_cfg, seed)
        self.ui: UiState = initial_ui(self.state)
        self.limiter = RateLimiter(spec.epm_limit, sim_cfg.steps_per_second)
        self.precision = PrecisionConfig(p=spec.precision)
        self.inject_rng = random.Random(seed ^ 0x5EED)
        self.records: list[ActionRecord] = []
        self.total_reward = 0

    @property
    def done(self) -> bool:
        return is_terminal(self.state)

    def step(self, action: RawAction | HumanAction | None) -> StepResult:
        pre_state = self.state
        pre_ui = self.ui
        decision_step = pre_state.step

        rejected = False
        kind = NO_OP
        command = NOOP_COMMAND
        post_ui = pre_ui
        if action is not None:
            if self.spec.precision < 1.0:
                action = inject_precision_error(
                    self.inject_rng,
                    action,
                    self.precision,
                    max_entities=pre_state.cfg.max_entities,
                )
            kind = action.kind
            if not self.limiter.admit(decision_step):
                rejected = True
            else:
                try:
                    if isinstance(action, RawAction):
                        command = resolve_raw(pre_state, action)
                    else:
                        post_ui, cmd = resolve_human(
                            pre_state, pre_ui, action, self.spec.camera_mode
                        )
                        command = cmd if cmd is not None else NOOP_COMMAND
                except ResolveError as err:
                    command = NOOP_COMMAND
                    if err.ui is not None:
                        post_ui = err.ui

        post = pre_state.clone()
        events = apply_command(post, command)
        effective = (not rejected) and classify_effective(
            pre_state, post, pre_ui, post_ui, action
        )
        for _ in range(self.step_mul):
            if is_terminal(post):
                break
            events += advance(post)

        r = reward(pre_state, post)
        self.state = post
        self.ui = post_ui
        self.total_reward += r
        record = ActionRecord(
            step=decision_step,
            side=self.side,
            action_kind=kind,
            is_camera=kind in CAMERA_KINDS,
            is_effective=effective,
            was_rejected=rejected,
            payload=_payload(action) if action is not None else "",
        )
        self.records.append(record)
        return StepResult(reward=r, record=record, events=events)
