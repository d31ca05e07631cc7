"""Fairness middleware tests: the constraint DSL, the EPM limiter, the
effectiveness classifier, camera filters, and precision-error
injection."""
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrts.actions import (
    BUILD_PYLON,
    CAMERA_REAL,
    CAMERA_VIRTUAL,
    PRODUCE_PROBE,
    Camera,
    HumanAction,
    RawAction,
    UiState,
)
from fairrts.fairness import (
    PRESETS,
    PrecisionConfig,
    ProblemSpec,
    RateLimiter,
    SpecParseError,
    classify_effective,
    epm_cap,
    format_spec,
    inject_precision_error,
    move_camera_click,
    move_camera_scroll,
    parse_spec,
    real_camera_filter,
    virtual_camera_filter,
)
from fairrts.sim import (
    OWNER_OPPONENT,
    PROBE,
    ResolvedCommand,
    SimConfig,
    apply_command,
    new_game,
)


class TestSpecDsl:
    def test_preset_round_trips(self):
        for text in PRESETS.values():
            assert format_spec(parse_spec(text)) == text

    def test_level1_fields(self):
        spec = parse_spec(PRESETS["level1"])
        assert spec.interface == "raw"
        assert spec.human_data_level == 3
        assert spec.epm_limit == 180
        assert spec.camera_mode == CAMERA_VIRTUAL
        assert spec.precision == 1.0

    def test_level4_fields(self):
        spec = parse_spec(PRESETS["level4"])
        assert spec.interface == "human"
        assert spec.human_data_level == 0
        assert spec.epm_limit == 120
        assert spec.camera_mode == CAMERA_REAL
        assert spec.precision == 0.85

    def test_clauses_optional_and_order_insensitive(self):
        assert parse_spec("SC^r_0{}").epm_limit is None
        a = parse_spec("SC^r_0{C_1, E_60}")
        b = parse_spec("SC^r_0{E_60, C_1}")
        assert a == b

    @pytest.mark.parametrize(
        "text,pos",
        [
            ("SC^x_9{}", 3),
            ("XX^r_0{}", 0),
            ("SC^r_9{}", 5),
            ("SC^rr0{}", 4),
        ],
    )
    def test_error_positions(self, text, pos):
        with pytest.raises(SpecParseError) as exc:
            parse_spec(text)
        assert exc.value.pos == pos

    @pytest.mark.parametrize(
        "text",
        [
            "SC^r_0{E_0}",
            "SC^r_0{E_60, E_70}",
            "SC^r_0{Q_9}",
            "SC^r_0{P_1.5}",
            "SC^r_0{P_0.00}",
            "SC^r_0{C_2}",
            "SC^r_0",
            "",
        ],
    )
    def test_invalid_specs_rejected(self, text):
        with pytest.raises(SpecParseError):
            parse_spec(text)

    def test_problem_spec_validation(self):
        with pytest.raises(ValueError):
            ProblemSpec(interface="macro")
        with pytest.raises(ValueError):
            ProblemSpec(human_data_level=5)
        with pytest.raises(ValueError):
            ProblemSpec(precision=0.0)

    @given(
        iface=st.sampled_from("rh"),
        level=st.integers(0, 3),
        epm=st.one_of(st.none(), st.integers(1, 999)),
        cam=st.one_of(st.none(), st.sampled_from("01")),
        prec=st.integers(1, 100),
    )
    @settings(max_examples=200, deadline=None)
    def test_fuzzed_round_trip(self, iface, level, epm, cam, prec):
        clauses = []
        if epm is not None:
            clauses.append(f"E_{epm}")
        if cam is not None:
            clauses.append(f"C_{cam}")
        clauses.append(f"P_{prec / 100:.2f}")
        text = f"SC^{iface}_{level}{{{', '.join(clauses)}}}"
        assert format_spec(parse_spec(text)) == text


class TestEpmLimiter:
    @pytest.mark.parametrize(
        "limit,cap", [(180, 15), (160, 13), (140, 12), (120, 10), (6, 1)]
    )
    def test_cap_rounds_half_up(self, limit, cap):
        assert epm_cap(limit) == cap

    def test_unlimited_admits_everything(self):
        lim = RateLimiter(None)
        assert all(lim.admit(t) for t in range(1000))

    def test_window_slides(self):
        lim = RateLimiter(180, steps_per_second=16)
        # fill the cap instantly, then everything is rejected until the
        # window moves past the burst
        assert sum(lim.admit(0) for _ in range(20)) == 15
        assert not lim.admit(79)
        assert lim.admit(80)

    @given(
        limit=st.integers(12, 300),
        stream=st.lists(st.integers(0, 3), min_size=1, max_size=300),
    )
    @settings(max_examples=60, deadline=None)
    def test_no_window_exceeds_cap(self, limit, stream):
        sps = 16
        lim = RateLimiter(limit, steps_per_second=sps)
        cap = epm_cap(limit)
        admitted = []
        now = 0
        for gap in stream:
            now += gap
            if lim.admit(now):
                admitted.append(now)
        window = RateLimiter.WINDOW_SECONDS * sps
        for t in admitted:
            in_window = sum(1 for s in admitted if t - window < s <= t)
            assert in_window <= cap


class TestEffectiveness:
    def setup_method(self):
        self.state = new_game(SimConfig(), 0)
        self.ui = UiState(camera=Camera(16.0, 32.0))

    def test_state_delta_is_effective(self):
        post = self.state.clone()
        nexus = next(
            t for t, e in post.entities.items() if e.kind == "Nexus"
        )
        apply_command(post, ResolvedCommand(PRODUCE_PROBE, nexus))
        assert classify_effective(self.state, post, self.ui, self.ui)

    def test_selection_delta_is_effective(self):
        ui2 = UiState(selection=frozenset({3}), camera=self.ui.camera)
        assert classify_effective(
            self.state, self.state.clone(), self.ui, ui2
        )

    def test_camera_delta_is_effective(self):
        ui2 = UiState(camera=Camera(40.0, 40.0))
        assert classify_effective(
            self.state, self.state.clone(), self.ui, ui2
        )

    def test_pure_noop_is_ineffective(self):
        assert not classify_effective(
            self.state, self.state.clone(), self.ui, self.ui
        )


class TestCameraFilters:
    def setup_method(self):
        self.state = new_game(SimConfig(opponent_probes=1), 0)
        self.camera = Camera(16.0, 32.0)
        self.opp = next(
            e
            for e in self.state.entities.values()
            if e.owner == OWNER_OPPONENT
        )
        assert not self.camera.contains(self.opp.x, self.opp.y)

    def test_virtual_stubs_offscreen_opponent(self):
        obs = virtual_camera_filter(self.state, self.camera)
        stub = next(e for e in obs.entities if e.tag == self.opp.tag)
        assert stub.display_only
        assert stub.order is None and stub.build_progress is None
        assert (stub.kind, stub.owner, stub.x, stub.y) == (
            self.opp.kind,
            self.opp.owner,
            self.opp.x,
            self.opp.y,
        )

    def test_virtual_passes_own_through(self):
        obs = virtual_camera_filter(self.state, self.camera)
        own = [e for e in obs.entities if e.owner == "self"]
        assert all(not e.display_only for e in own)
        assert len(own) == 13  # nexus + 12 probes

    def test_real_hides_offscreen_entities(self):
        obs = real_camera_filter(self.state, self.camera)
        assert all(self.camera.contains(e.x, e.y) for e in obs.entities)
        assert self.opp.tag not in {e.tag for e in obs.entities}

    def test_real_minimap_counts_everything(self):
        obs = real_camera_filter(self.state, self.camera)
        assert sum(map(sum, obs.minimap_own)) == 13
        assert sum(map(sum, obs.minimap_opponent)) == 1

    def test_click_beats_scroll(self):
        cam = Camera(16.0, 32.0)
        clicked = move_camera_click(cam, (48.0, 32.0), 64.0, 64.0)
        assert (clicked.cx, clicked.cy) == (48.0, 32.0)
        scrolled = move_camera_scroll(cam, (1.0, 0.0), 0.5, 64.0, 64.0)
        assert scrolled.cx == 22.0  # 12 units/s for half a second
        assert abs(clicked.cx - 16.0) > abs(scrolled.cx - 16.0)

    def test_click_clamps_at_corner(self):
        cam = move_camera_click(Camera(32, 32), (0.0, 0.0), 64.0, 64.0)
        assert (cam.cx, cam.cy) == (16.0, 10.0)


class TestPrecision:
    def test_p_one_never_perturbs(self):
        rng = random.Random(0)
        cfg = PrecisionConfig(p=1.0)
        a = RawAction(BUILD_PYLON, 2, (10.0, 10.0))
        assert all(
            inject_precision_error(rng, a, cfg) is a for _ in range(1000)
        )

    def test_perturbation_changes_one_aspect(self):
        rng = random.Random(1)
        cfg = PrecisionConfig(p=0.5)
        a = RawAction(BUILD_PYLON, 2, (10.0, 10.0))
        perturbed = 0
        for _ in range(400):
            out = inject_precision_error(rng, a, cfg)
            if out is a:
                continue
            perturbed += 1
            diffs = sum(
                [
                    out.kind != a.kind,
                    out.selected_index != a.selected_index,
                    out.target_location != a.target_location,
                ]
            )
            assert diffs == 1
        assert perturbed > 100

    def test_inapplicable_aspect_falls_through(self):
        rng = random.Random(2)
        cfg = PrecisionConfig(p=0.5, weights=(0.0, 0.0, 1.0))
        a = RawAction(PRODUCE_PROBE, 0)  # no target to jitter
        seen_change = False
        for _ in range(200):
            out = inject_precision_error(rng, a, cfg)
            if out is not a:
                seen_change = True
                assert out != a  # fell through to another aspect
        assert seen_change

    def test_human_screen_point_jitter_stays_on_screen(self):
        rng = random.Random(3)
        cfg = PrecisionConfig(p=0.5, weights=(0.0, 0.0, 1.0))
        a = HumanAction(BUILD_PYLON, screen_point=(0.0, 0.0))
        for _ in range(200):
            out = inject_precision_error(rng, a, cfg)
            x, y = out.screen_point
            assert 0.0 <= x <= 256.0 and 0.0 <= y <= 160.0

    def test_deterministic_for_seed(self):
        cfg = PrecisionConfig(p=0.5)
        a = RawAction(BUILD_PYLON, 2, (10.0, 10.0))
        outs1 = [
            inject_precision_error(random.Random(7), a, cfg)
            for _ in range(1)
        ]
        outs2 = [
            inject_precision_error(random.Random(7), a, cfg)
            for _ in range(1)
        ]
        assert outs1 == outs2

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            PrecisionConfig(p=0.0)
        with pytest.raises(ValueError):
            PrecisionConfig(p=0.5, weights=(0.5, 0.5, 0.5))
