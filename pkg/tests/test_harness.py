"""Scenario model, presets, scenario files, run orchestration, starvation windows."""

import math

import numpy as np
import pytest

from ledbatsim.harness import (
    FlowSpec,
    ParseError,
    Scenario,
    TraceSet,
    UsageError,
    ValidationError,
    detect_starvation,
    format_scenario,
    get_preset,
    parse_scenario_text,
    preset_names,
    resolve_cell_run,
    resolve_starts,
    rng_for_run,
    run_scenario,
    run_table1,
    table1_cells,
)

S = 1_000_000


def _tiny(duration_s=20.0, **kw):
    base = dict(
        name="tiny",
        capacity_bps=10_000_000,
        buffer_pkts=40,
        flows=[FlowSpec("tcp"), FlowSpec("ledbat")],
        duration_s=duration_s,
    )
    base.update(kw)
    return Scenario(**base)


# -- validation ----------------------------------------------------------------


def test_validate_passes_sane_scenario():
    _tiny().validate()


@pytest.mark.parametrize("patch,fragment", [
    (dict(capacity_bps=0), "capacity"),
    (dict(buffer_pkts=0), "buffer"),
    (dict(flows=[]), "at least one flow"),
    (dict(duration_s=0.0), "duration"),
    (dict(delta_t_mode="gaussian"), "delta_t_mode"),
    (dict(start_jitter_s=-1.0), "jitter"),
    (dict(seed=-1), "seed"),
])
def test_validate_rejects_bad_top_level(patch, fragment):
    with pytest.raises(ValidationError, match=fragment):
        _tiny(**patch).validate()


@pytest.mark.parametrize("flow,fragment", [
    (FlowSpec("quic"), "unknown kind"),
    (FlowSpec("tcp", start_s=25.0), "start_s"),  # beyond 20 s duration
    (FlowSpec("ledbat", target_ms=0.0), "target_ms"),
    (FlowSpec("ledbat", base_histo_min=1), "base_histo_min"),
    (FlowSpec("ledbat", gain=(0, 5)), "gain"),
])
def test_validate_rejects_bad_flow(flow, fragment):
    with pytest.raises(ValidationError, match=fragment):
        _tiny(flows=[flow]).validate()


def test_validate_rejects_rtt_below_service_time():
    # 1500 B at 10 Mbps needs 1200 us; a 2 ms RTT leaves only 1000 us one-way
    with pytest.raises(ValidationError, match="rtt_base_us"):
        _tiny(rtt_base_us=2000).validate()


# -- presets -------------------------------------------------------------------


def test_preset_inventory():
    names = preset_names()
    assert len(names) == 37
    for required in ("fig2a", "fig2b", "fig3-top", "fig3-mid", "fig3-bottom",
                     "tcp-alone-hs-b40", "adsl-b10-tcp-vs-ledbat"):
        assert required in names
    assert sum(1 for n in names if n.startswith("table1-")) == 24


def test_get_preset_returns_independent_copies():
    a = get_preset("fig2a")
    a.flows[0].start_s = 123.0
    assert get_preset("fig2a").flows[0].start_s != 123.0


def test_get_preset_unknown_name():
    with pytest.raises(UsageError, match="unknown preset"):
        get_preset("fig99")


def test_presets_validate():
    for name in preset_names():
        get_preset(name).validate()


def test_table_grid_order_is_frozen():
    cells = table1_cells()
    assert len(cells) == 24
    assert cells[0].name == "table1-tl-c2-b10-dt2-noss"
    assert cells[20].name == "table1-ll-c10-b50-dt10-noss"
    assert cells[23].name == "table1-ll-c10-b50-dtu-ss"
    for scn in cells:
        scn.validate()
        assert len(scn.flows) == 2


# -- start resolution ----------------------------------------------------------


def test_rng_split_is_stable_and_disjoint():
    a = rng_for_run(7, 3, 0).uniform(0, 10)
    b = rng_for_run(7, 3, 0).uniform(0, 10)
    c = rng_for_run(7, 3, 1).uniform(0, 10)
    assert a == b
    assert a != c


def test_uniform_mode_draws_second_start():
    scn = _tiny(duration_s=60.0, delta_t_mode="uniform")
    draws = [resolve_starts(scn, rng_for_run(0, 0, i)).flows[1].start_s
             for i in range(10_000)]
    assert all(0.0 <= d < 10.0 for d in draws)
    assert abs(float(np.mean(draws)) - 5.0) < 0.15
    resolved = resolve_starts(scn, rng_for_run(0, 0, 0))
    assert resolved.delta_t_mode == "fixed"  # a resolved scenario re-runs as-is
    assert resolved.flows[0].start_s == 0.0


def test_fixed_mode_jitters_around_the_offset():
    scn = _tiny(duration_s=60.0,
                flows=[FlowSpec("tcp"), FlowSpec("ledbat", start_s=10.0)],
                start_jitter_s=0.1)
    starts = [resolve_starts(scn, rng_for_run(0, 0, i)).flows[1].start_s
              for i in range(200)]
    assert all(10.0 <= s < 10.1 for s in starts)
    assert len(set(starts)) > 100  # actually random


def test_resolve_cell_run_is_deterministic():
    scn = table1_cells()[4]  # a dt=U(0,10) cell
    a = resolve_cell_run(scn, 7, 4, 2)
    b = resolve_cell_run(scn, 7, 4, 2)
    assert a.flows[1].start_s == b.flows[1].start_s


# -- scenario files --------------------------------------------------------------


def test_scenario_text_round_trip():
    scn = _tiny(flows=[
        FlowSpec("tcp", slow_start=True),
        FlowSpec("ledbat", start_s=3.0, gain=(1, 50_000), base_histo_min=4,
                 clock_offset_us=250, pacing=False),
    ])
    text = format_scenario(scn)
    again = parse_scenario_text(text, origin="round.scn")
    assert format_scenario(again) == text
    assert again.flows[1].gain == (1, 50_000)
    assert again.flows[1].clock_offset_us == 250


@pytest.mark.parametrize("text,fragment", [
    ("not-a-scenario\n", "first line"),
    ("ledbatsim-scenario v1\ncapacity_mbps 10\n", ":2: expected key = value"),
    ("ledbatsim-scenario v1\nseed = 1\nseed = 2\n", ":3: duplicate key"),
    ("ledbatsim-scenario v1\nbuffer_pkts = 40\n[flow]\nkind = tcp\n",
     "missing required key 'capacity_mbps'"),
    ("ledbatsim-scenario v1\ncapacity_mbps = 10\nbuffer_pkts = 40\n", "no \\[flow\\]"),
    ("ledbatsim-scenario v1\ncapacity_mbps = 10\nbuffer_pkts = 40\nwarp = 9\n"
     "[flow]\nkind = tcp\n", "unknown key 'warp'"),
    ("ledbatsim-scenario v1\ncapacity_mbps = 10\nbuffer_pkts = 40\n"
     "[flow]\nkind = tcp\nslow_start = maybe\n", "expected on/off"),
    ("ledbatsim-scenario v1\ncapacity_mbps = 10\nbuffer_pkts = 40\n"
     "[flow]\nkind = tcp\ngain = 1:2\n", "num/den"),
    ("ledbatsim-scenario v1\ncapacity_mbps = ten\nbuffer_pkts = 40\n"
     "[flow]\nkind = tcp\n", "bad value for 'capacity_mbps'"),
])
def test_parse_errors_carry_origin_and_line(text, fragment):
    with pytest.raises(ParseError, match=fragment) as exc:
        parse_scenario_text(text, origin="bad.scn")
    assert "bad.scn" in str(exc.value)


def test_comments_and_blank_lines_are_ignored():
    text = (
        "ledbatsim-scenario v1\n"
        "\n"
        "# capacity of the shared link\n"
        "capacity_mbps = 2  # ADSL-ish\n"
        "buffer_pkts = 10\n"
        "[flow]\n"
        "kind = ledbat\n"
    )
    scn = parse_scenario_text(text)
    assert scn.capacity_bps == 2_000_000
    assert scn.flows[0].kind == "ledbat"


# -- running -------------------------------------------------------------------


def test_run_scenario_trace_shape_and_conservation():
    res = run_scenario(_tiny(duration_s=10.0), sample_us=100_000)
    tr = res.trace
    n = len(tr.sample_t_us)
    assert n == 101  # 0..10 s inclusive at 100 ms cadence
    assert tr.sample_t_us[0] == 0 and tr.sample_t_us[-1] == 10 * S
    for series in (tr.queue_pkts, tr.link_delivered_bytes, tr.link_offered, tr.link_dropped):
        assert len(series) == n
    for fid in tr.flow_ids:
        assert len(tr.cwnd_pkts[fid]) == n
        assert len(tr.delivered_bytes[fid]) == n
        assert min(tr.cwnd_pkts[fid]) >= 1.0
    assert tr.conservation_ok
    assert res.metrics.eta_percent > 50.0  # both flows actually moved data
    assert len(res.flow_stats) == 2


def test_run_scenario_is_deterministic():
    scn = _tiny(duration_s=15.0)
    a = run_scenario(scn)
    b = run_scenario(scn)
    assert a.trace.cwnd_pkts == b.trace.cwnd_pkts
    assert a.trace.drops == b.trace.drops
    assert a.metrics == b.metrics


def test_flow_start_times_are_honored():
    scn = _tiny(duration_s=12.0,
                flows=[FlowSpec("tcp"), FlowSpec("ledbat", start_s=6.0)])
    tr = run_scenario(scn, sample_us=100_000).trace
    i_before = tr._sample_index_at(5 * S)
    assert tr.delivered_bytes[1][i_before] == 0
    assert tr.delivered_bytes[1][-1] > 0


def test_run_rejects_invalid_scenario():
    with pytest.raises(ValidationError):
        run_scenario(_tiny(buffer_pkts=0))


# -- table orchestration ---------------------------------------------------------


def test_run_table_cell_filter_and_determinism():
    summaries, facts = run_table1(2, base_seed=3, cells=["tl-c2-b10-dt2-noss"])
    assert len(summaries) == 1
    cell = summaries[0]
    assert cell.name == "table1-tl-c2-b10-dt2-noss"
    assert cell.mix == "tcp-ledbat"
    assert (cell.capacity_mbps, cell.buffer_pkts, cell.runs) == (2.0, 10, 2)
    assert len(facts) == 2
    again, _ = run_table1(2, base_seed=3, cells=["tl-c2-b10-dt2-noss"])
    assert again[0].eta == cell.eta
    assert again[0].fairness == cell.fairness


def test_run_table_rejects_empty_selection_and_bad_runs():
    with pytest.raises(UsageError, match="selected nothing"):
        run_table1(1, base_seed=0, cells=["no-such-cell"])
    with pytest.raises(UsageError, match="at least 1"):
        run_table1(0, base_seed=0)


# -- starvation windows -----------------------------------------------------------


def _starvation_trace(flow1_rates_bps, capacity_bps=10_000_000, window_s=10):
    """Synthetic two-flow trace: flow 0 saturates, flow 1 follows the given
    per-window rates (None = not yet started)."""
    n_windows = len(flow1_rates_bps)
    tr = TraceSet([0, 1], ["tcp", "ledbat"], capacity_bps, 1500,
                  n_windows * window_s * S, S)
    cum0 = cum1 = 0
    tr.sample_t_us.append(0)
    tr.delivered_bytes[0].append(0)
    tr.delivered_bytes[1].append(0)
    for w, rate in enumerate(flow1_rates_bps):
        cum0 += capacity_bps // 8 * window_s  # flow 0 fills the link
        cum1 += 0 if rate is None else int(rate / 8 * window_s)
        tr.sample_t_us.append((w + 1) * window_s * S)
        tr.delivered_bytes[0].append(cum0)
        tr.delivered_bytes[1].append(cum1)
    return tr


def test_starvation_needs_two_flows():
    tr = TraceSet([0], ["tcp"], 10_000_000, 1500, 10 * S, S)
    with pytest.raises(UsageError, match="two flows"):
        detect_starvation(tr)


def test_starvation_merges_consecutive_windows():
    # fair share 5 Mbps; threshold 5% = 250 kbps
    tr = _starvation_trace([4e6, 1e5, 1e5, 1e5, 4e6])
    eps = detect_starvation(tr)
    assert [(e.flow_id, e.t0_us, e.t1_us) for e in eps] == [(1, 10 * S, 40 * S)]


def test_starvation_open_at_trace_end_is_reported():
    tr = _starvation_trace([4e6, 1e5, 1e5])
    eps = detect_starvation(tr)
    assert [(e.t0_us, e.t1_us) for e in eps] == [(10 * S, 30 * S)]


def test_starvation_ignores_windows_before_first_byte():
    # flow 1 starts in the third window; silence before that is not starvation
    tr = _starvation_trace([None, None, 4e6, 4e6])
    assert detect_starvation(tr) == []
    # but a started flow that then stalls is flagged
    tr = _starvation_trace([None, None, 4e6, 1e5])
    eps = detect_starvation(tr)
    assert [(e.flow_id, e.t0_us, e.t1_us) for e in eps] == [(1, 30 * S, 40 * S)]


def test_starvation_requires_a_thriving_competitor():
    # both flows idle: nobody is starved, the link is just unused
    tr = _starvation_trace([1e5, 1e5])
    tr.delivered_bytes[0] = [0, 125, 250]  # flow 0 barely moves either
    assert detect_starvation(tr) == []
