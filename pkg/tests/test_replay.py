"""Replay log format and metrics tests."""
import importlib.resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrts.replay import (
    SIDE_AGENT,
    SIDE_PLAYER,
    ActionRecord,
    DegenerateInput,
    DegenerateLog,
    FormatError,
    LogHeader,
    MetricsReport,
    ReplayLog,
    SideMetrics,
    aggregate,
    analyze_log,
    apm_epm_ratio,
    camera_stats,
    compute_apm,
    compute_epm,
    ingest_table_csv,
    instant_rates,
    non_camera_epm,
    read_log,
    write_log,
)

DATA_DIR = importlib.resources.files("fairrts").joinpath("data")


def header(duration_steps=960, sides=(SIDE_AGENT,), sps=16):
    return LogHeader(
        spec="SC^r_3{E_180, C_1, P_1.00}",
        seed=1,
        config_hash="abc",
        sides=tuple(sides),
        steps_per_second=sps,
        duration_steps=duration_steps,
    )


def rec(step, kind="ProduceProbe", effective=True, rejected=False, side=SIDE_AGENT):
    return ActionRecord(
        step=step,
        side=side,
        action_kind=kind,
        is_camera=kind == "MoveCamera",
        is_effective=effective,
        was_rejected=rejected,
    )


class TestFormat:
    def test_round_trip(self):
        log = ReplayLog(
            header(),
            (rec(0), rec(10, "MoveCamera"), rec(20, effective=False)),
        )
        assert read_log(write_log(log)) == log

    def test_manifest_carried(self):
        h = header()
        h = LogHeader(**{**h.__dict__, "manifest": '{"subcommand":"sim"}'})
        log = ReplayLog(h, (rec(0),))
        assert read_log(write_log(log)).header.manifest == h.manifest

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            read_log(b"#nope {}\n")

    def test_truncated_final_line(self):
        data = write_log(ReplayLog(header(), (rec(0), rec(5))))
        with pytest.raises(FormatError):
            read_log(data[:-2])

    def test_step_regression_rejected(self):
        log = ReplayLog(header(), (rec(10), rec(5)))
        with pytest.raises(FormatError):
            write_log(log)

    def test_unknown_kind_rejected(self):
        log = ReplayLog(header(), (rec(0, kind="Teleport"),))
        with pytest.raises(FormatError):
            write_log(log)

    def test_camera_flag_must_match_kind(self):
        bad = ActionRecord(0, SIDE_AGENT, "MoveCamera", False, True, False)
        with pytest.raises(FormatError):
            write_log(ReplayLog(header(), (bad,)))

    def test_error_carries_line_number(self):
        data = write_log(ReplayLog(header(), (rec(0), rec(5)))).decode()
        lines = data.splitlines()
        lines[2] = "not json"
        with pytest.raises(FormatError) as exc:
            read_log(("\n".join(lines) + "\n").encode())
        assert exc.value.line == 3

    @given(
        steps=st.lists(st.integers(0, 900), min_size=0, max_size=50),
        kinds=st.lists(
            st.sampled_from(
                ["ProduceProbe", "BuildPylon", "MoveCamera", "NoOp"]
            ),
            min_size=50,
            max_size=50,
        ),
        flags=st.lists(
            st.tuples(st.booleans(), st.booleans()), min_size=50, max_size=50
        ),
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, steps, kinds, flags):
        records = tuple(
            rec(s, kinds[i], flags[i][0], flags[i][1])
            for i, s in enumerate(sorted(steps))
        )
        log = ReplayLog(header(), records)
        assert read_log(write_log(log)) == log


class TestMetrics:
    def make_log(self):
        # 60 game seconds; 10 actions: 1 rejected, 6 effective of which
        # 2 are camera moves
        records = (
            rec(0),
            rec(16),
            rec(32, "MoveCamera"),
            rec(48, "MoveCamera"),
            rec(64),
            rec(80),
            rec(96, effective=False),
            rec(112, effective=False),
            rec(128, effective=False),
            rec(144, rejected=True),
        )
        return ReplayLog(header(duration_steps=960), records)

    def test_apm_counts_issued(self):
        assert compute_apm(self.make_log(), SIDE_AGENT) == 9.0

    def test_epm_counts_effective(self):
        assert compute_epm(self.make_log(), SIDE_AGENT) == 6.0

    def test_camera_stats(self):
        co, ao, ncr = camera_stats(self.make_log(), SIDE_AGENT)
        assert (co, ao) == (2, 6)
        assert ncr == pytest.approx(1 - 2 / 6)

    def test_non_camera_epm(self):
        m = SideMetrics(epm=6.0, ncr=2 / 3)
        assert non_camera_epm(m) == pytest.approx(4.0)
        with pytest.raises(DegenerateInput):
            non_camera_epm(SideMetrics(epm=6.0))

    def test_zero_duration_degenerate(self):
        log = ReplayLog(header(duration_steps=0), ())
        with pytest.raises(DegenerateLog):
            compute_apm(log, SIDE_AGENT)

    def test_instant_rates_window(self):
        apm, epm = instant_rates(self.make_log(), SIDE_AGENT)
        assert len(apm) == 60
        # the 5 s window ending at second 5 is half-open (0, 80]: it
        # holds the actions at steps 16..80, all five effective
        assert apm[4] == 5 * 60.0 / 5
        assert epm[4] == 5 * 60.0 / 5
        # by second 10 the window (80, 160] holds the three ineffective
        # actions and the rejected one (excluded from both rates)
        assert apm[9] == 3 * 60.0 / 5
        assert epm[9] == 0.0

    def test_analyze_log_complete(self):
        report = analyze_log(self.make_log(), label="x")
        m = report.sides[SIDE_AGENT]
        assert report.complete()
        assert m.apm == 9.0 and m.epm == 6.0
        assert m.nc_epm == pytest.approx(4.0)


def _report(apm, epm, co, ao, ncr, side=SIDE_AGENT, label=""):
    return MetricsReport(
        sides={
            side: SideMetrics(
                apm=apm, epm=epm, co=co, ao=ao, ncr=ncr, nc_epm=epm * ncr
            )
        },
        label=label,
    )


class TestAggregate:
    def test_single_report_identity(self):
        r = _report(200.0, 180.0, 300.0, 900.0, 2 / 3)
        agg = aggregate([r])
        assert agg.sides[SIDE_AGENT] == r.sides[SIDE_AGENT]

    def test_k_copies_identity(self):
        r = _report(200.0, 180.0, 300.0, 900.0, 2 / 3)
        agg = aggregate([r] * 5)
        m = agg.sides[SIDE_AGENT]
        assert m.apm == pytest.approx(200.0)
        assert m.ncr == pytest.approx(2 / 3)

    def test_ncr_averaged_per_replay_not_pooled(self):
        a = _report(100.0, 100.0, 10.0, 100.0, 0.9)
        b = _report(100.0, 100.0, 300.0, 400.0, 0.25)
        agg = aggregate([a, b])
        # per-replay mean (0.9 + 0.25)/2, not pooled 1 - 310/500
        assert agg.sides[SIDE_AGENT].ncr == pytest.approx(0.575)

    def test_incomplete_excluded_and_counted(self):
        complete = _report(100.0, 90.0, 10.0, 100.0, 0.9)
        incomplete = MetricsReport(sides={SIDE_AGENT: SideMetrics(apm=50.0)})
        agg = aggregate([complete, incomplete])
        assert agg.n_reports == 1
        assert agg.n_excluded == 1
        assert agg.sides[SIDE_AGENT].apm == 100.0

    def test_all_incomplete_degenerate(self):
        with pytest.raises(DegenerateInput):
            aggregate([MetricsReport(sides={})])


class TestTableIngest:
    def test_protoss_fixture_shape(self):
        reports = ingest_table_csv(DATA_DIR / "replay_stats_protoss.csv")
        assert len(reports) == 30
        incomplete = [r for r in reports if not r.complete()]
        assert len(incomplete) == 1
        assert incomplete[0].label == "12"

    def test_row_nc_epm_derived(self):
        reports = ingest_table_csv(DATA_DIR / "replay_stats_protoss.csv")
        first = reports[0].sides[SIDE_AGENT]
        assert first.nc_epm == pytest.approx(first.epm * first.ncr)

    def test_missing_column_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("id,epm_agent\n1,100\n")
        with pytest.raises(FormatError):
            ingest_table_csv(p)

    def test_bad_cell_rejected(self, tmp_path):
        reports = ingest_table_csv(DATA_DIR / "replay_stats_terran.csv")
        header_line = "id," + ",".join(
            c
            for c in (
                "epm_agent,epm_player,apm_agent,apm_player,"
                "co_agent,ao_agent,ncr_agent,co_player,ao_player,ncr_player"
            ).split(",")
        )
        p = tmp_path / "bad.csv"
        p.write_text(header_line + "\n1,oops,1,1,1,1,1,1,1,1,1\n")
        with pytest.raises(FormatError) as exc:
            ingest_table_csv(p)
        assert exc.value.line == 2
        assert reports  # fixture itself stays readable

    def test_empty_csv_degenerate(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text(
            "id,epm_agent,epm_player,apm_agent,apm_player,co_agent,"
            "ao_agent,ncr_agent,co_player,ao_player,ncr_player\n"
        )
        with pytest.raises(DegenerateInput):
            ingest_table_csv(p)


class TestRatios:
    def test_both_estimators_reported(self):
        a = _report(100.0, 50.0, 10.0, 40.0, 0.75)
        b = _report(300.0, 100.0, 10.0, 80.0, 0.875)
        out = apm_epm_ratio([a, b])
        side = out[SIDE_AGENT]
        # ratio of means: 200/75; mean of ratios: (2 + 3)/2
        assert side["ratio_of_means"] == pytest.approx(200.0 / 75.0)
        assert side["mean_of_ratios"] == pytest.approx(2.5)
        assert side["ratio_of_means"] != side["mean_of_ratios"]

    def test_two_sides_in_fixture(self):
        reports = ingest_table_csv(DATA_DIR / "replay_stats_protoss.csv")
        out = apm_epm_ratio(reports)
        assert set(out) == {SIDE_AGENT, SIDE_PLAYER}
