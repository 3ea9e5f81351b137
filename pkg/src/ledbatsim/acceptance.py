"""End-to-end acceptance checks over the packaged presets.

Each criterion runs real scenarios and compares measured dynamics against a
fixed expectation band. Exact properties (trajectory equalities, conservation,
bounds) are checked alongside the statistical bands so a single report covers
both. The same routine backs the `check` CLI command and the acceptance test
module; it prints nothing itself.
"""

import contextlib
import io
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .harness import (
    FlowSpec,
    RunResult,
    Scenario,
    detect_starvation,
    extract_check_facts,
    get_preset,
    run_scenario,
    run_table1,
)
from .metrics import jain_fairness, utilization

S = 1_000_000  # us per second


@dataclass
class CriterionResult:
    cid: str
    description: str
    measured: str
    expected: str
    passed: bool


CRITERIA_IDS = [
    "1a", "1b", "1c", "1d",
    "2-fairness", "2-utilization",
    "3", "4",
    "5a", "5b", "5c", "5d",
    "6a", "6b", "6c", "6d", "6e", "6f", "6g",
    "7",
]


def _sample_index_window(trace, t0_us, t1_us):
    return [i for i, t in enumerate(trace.sample_t_us) if t0_us <= t <= t1_us]


def _criterion_1(fig2a: RunResult, tcp_alone: RunResult):
    tr = fig2a.trace
    tcp_id, ledbat_id = 0, 1
    results = []

    drops = tr.drops
    first_drop_us = drops[0][0] if drops else tr.duration_us
    cw = tr.cwnd_pkts[ledbat_id]
    ts = tr.sample_t_us
    pre_loss = [c for c, t in zip(cw, ts) if t <= first_drop_us]
    peak = max(pre_loss) if pre_loss else 0.0

    # 1a: somewhere in [2,4] s the delay-based window sits at its plateau and
    # the sampled queue is within 2 packets of the 20.8-packet delay target.
    window = _sample_index_window(tr, 2 * S, 4 * S)
    i_star = max(window, key=lambda i: cw[i])
    q_star = tr.queue_pkts[i_star]
    at_plateau = cw[i_star] >= 0.97 * peak
    q_ok = 18.8 <= q_star <= 22.8
    results.append(CriterionResult(
        "1a", "delay-based window plateaus at the queue target in [2,4] s",
        f"queue={q_star} pkts at t={ts[i_star] / S:.2f} s "
        f"(window {cw[i_star]:.1f} of peak {peak:.1f})",
        "queue in [18.8, 22.8] pkts while window is at its pre-loss plateau",
        at_plateau and q_ok,
    ))

    # 1b: first loss in [5,8] s; the loss-based window halves to about 40.
    tcp_drops = [t for t, fid, _ in drops if fid == tcp_id]
    first_tcp_drop = tcp_drops[0] if tcp_drops else None
    halvings = tr.halvings[tcp_id]
    halve_to = halvings[0][1] if halvings else None
    ok = (
        first_tcp_drop is not None
        and 5 * S <= first_tcp_drop <= 8 * S
        and halve_to is not None
        and 32.0 <= halve_to <= 48.0
    )
    results.append(CriterionResult(
        "1b", "first loss-based-flow drop in [5,8] s, window halves to ~40",
        f"first drop at t={first_tcp_drop / S:.2f} s, halved to {halve_to:.1f} pkts"
        if first_tcp_drop is not None and halve_to is not None else "no drop/halving seen",
        "drop time in [5,8] s and post-halving window in [32,48] pkts",
        ok,
    ))

    # 1c: fairness over the full run.
    f = fig2a.metrics.fairness
    results.append(CriterionResult(
        "1c", "two-flow fairness over [0,300] s",
        f"F={f:.3f}", "0.65 +/- 0.07", 0.58 <= f <= 0.72,
    ))

    # 1d: how much the delay-based flow lifts utilization beyond the
    # loss-based flow's own share of the same run (relative percent), with the
    # solo run reported for context.
    span = (fig2a.metrics.t0_us, fig2a.metrics.t1_us)
    eta_total = fig2a.metrics.eta_percent
    eta_tcp_share = utilization(tr, fig2a.scenario.capacity_bps, span, flow_id=tcp_id)
    gain = 100.0 * (eta_total - eta_tcp_share) / eta_tcp_share
    results.append(CriterionResult(
        "1d", "utilization gain from the delay-based flow",
        f"total {eta_total:.1f}% vs loss-based share {eta_tcp_share:.1f}% "
        f"-> +{gain:.1f}% relative (solo loss-based run: {tcp_alone.metrics.eta_percent:.1f}%)",
        "+16 +/- 6 percent relative",
        10.0 <= gain <= 22.0,
    ))
    return results


def _criterion_2(fig2b: RunResult, fig2a: RunResult):
    f = fig2b.metrics.fairness
    d_eta = abs(fig2b.metrics.eta_percent - fig2a.metrics.eta_percent)
    return [
        CriterionResult(
            "2-fairness", "two delay-based flows started together share fairly",
            f"F={f:.4f}", "F > 0.99", f > 0.99,
        ),
        CriterionResult(
            "2-utilization", "delay-based pair utilization close to mixed pair",
            f"|delta eta|={d_eta:.2f} points", "within 2 points", d_eta <= 2.0,
        ),
    ]


def _criterion_3(fig3mid: RunResult):
    tr = fig3mid.trace
    resync_drops = [t for t, _, _ in tr.drops if 20 * S <= t <= 30 * S]
    rep = None
    ok_f = False
    f_txt = "n/a"
    if tr.sample_t_us[-1] >= 300 * S:
        from .metrics import compute_report
        rep = compute_report(tr, fig3mid.scenario.capacity_bps, (30 * S, 300 * S))
        ok_f = rep.fairness > 0.8
        f_txt = f"{rep.fairness:.3f}"
    return [CriterionResult(
        "3", "late-start pair on the small buffer: resync loss then fair share",
        f"{len(resync_drops)} drops in [20,30] s; F[30,300]={f_txt}",
        ">=1 drop in [20,30] s and F > 0.8 over [30,300] s",
        bool(resync_drops) and ok_f,
    )]


def _criterion_4(fig3bot: RunResult):
    tr = fig3bot.trace
    early_drops = [t for t, _, _ in tr.drops if t < 120 * S]
    episodes = detect_starvation(tr)
    first_flow_eps = [e for e in episodes if e.flow_id == 0]
    ep_ok = any(
        10 * S <= e.t0_us <= 40 * S and 110 * S <= e.t1_us <= 140 * S
        for e in first_flow_eps
    )
    ep_txt = ", ".join(
        f"[{e.t0_us / S:.0f},{e.t1_us / S:.0f}] s" for e in first_flow_eps
    ) or "none"
    return [CriterionResult(
        "4", "large buffer: no losses before the minima history turns over; "
             "first flow starved until it does",
        f"{len(early_drops)} drops before 120 s; first-flow starvation {ep_txt}",
        "0 drops before 120 s; episode from ~20 s to ~120 s",
        not early_drops and ep_ok,
    )]


# spot cells exercised for the summary-grid bands
_CELL_LL_HS_NOSS = "table1-ll-c10-b50-dt10-noss"
_CELL_LL_HS_SS = "table1-ll-c10-b50-dt10-ss"
_CELL_TL_ADSL_NOSS = "table1-tl-c2-b10-dt2-noss"
_CELL_LL_ADSL_SS = "table1-ll-c2-b10-dt2-ss"


def _criterion_5(table_runs, seed, jobs, progress=None):
    cells = ["ll-c10-b50-dt10", "tl-c2-b10-dt2-noss", "ll-c2-b10-dt2-ss"]
    summaries, facts = run_table1(table_runs, seed, jobs=jobs, cells=cells,
                                  progress=progress)
    by_name = {s.name: s for s in summaries}
    results = []

    s = by_name[_CELL_LL_HS_NOSS]
    results.append(CriterionResult(
        "5a", "delay-based pair, fast link, late start, no slow start",
        f"F={s.fairness[0]:.3f} (std {s.fairness[1]:.3f}, {s.runs} runs)",
        "0.53 +/- 0.08", 0.45 <= s.fairness[0] <= 0.61,
    ))

    s = by_name[_CELL_LL_HS_SS]
    results.append(CriterionResult(
        "5b", "same cell with slow start restores fairness",
        f"F={s.fairness[0]:.3f} (std {s.fairness[1]:.3f}, {s.runs} runs)",
        "0.99 +/- 0.02", s.fairness[0] >= 0.97,
    ))

    s = by_name[_CELL_TL_ADSL_NOSS]
    results.append(CriterionResult(
        "5c", "loss-based vs delay-based on the slow link",
        f"eta={s.eta[0]:.1f}%, F={s.fairness[0]:.3f} ({s.runs} runs)",
        "eta >= 96% and F = 0.60 +/- 0.08",
        s.eta[0] >= 96.0 and 0.52 <= s.fairness[0] <= 0.68,
    ))

    ss_losses = {
        name: by_name[name].loss[0]
        for name in (_CELL_LL_HS_SS, _CELL_LL_ADSL_SS)
    }
    worst = max(ss_losses, key=ss_losses.get)
    results.append(CriterionResult(
        "5d", "slow-start loss rates stay small (delay-based pairs)",
        f"worst mean L={ss_losses[worst]:.2e} ({worst})",
        "<= 5e-3", ss_losses[worst] <= 5e-3,
    ))
    return results, facts


def _offset_scenario(offset_us: int) -> Scenario:
    base = get_preset("fig2b")
    flows = [replace(f) for f in base.flows]
    flows[1].clock_offset_us = offset_us
    return replace(base, name=f"offset-{offset_us}", flows=flows, duration_s=70.0)


def _criterion_6b():
    baseline = run_scenario(_offset_scenario(0))
    offsets = [S, -S, 3_600 * S, -3_600 * S]
    bad = []
    for off in offsets:
        r = run_scenario(_offset_scenario(off))
        same = (
            all(r.trace.cwnd_pkts[fid] == baseline.trace.cwnd_pkts[fid]
                for fid in r.trace.flow_ids)
            and r.trace.queue_pkts == baseline.trace.queue_pkts
            and r.trace.drops == baseline.trace.drops
            and r.trace.halvings == baseline.trace.halvings
            and r.trace.queuing_est_us[1] == baseline.trace.queuing_est_us[1]
        )
        shifted = all(
            b is None and a is None or (a is not None and b is not None and b == a + off)
            for a, b in zip(baseline.trace.base_delay_us[1], r.trace.base_delay_us[1])
        )
        if not (same and shifted):
            bad.append(off)
    return [CriterionResult(
        "6b", "receiver clock offsets cancel out of every trajectory",
        "all offset runs identical" if not bad else f"divergence at offsets {bad}",
        "trajectories equal for offsets +/-1 s and +/-1 h, base shifted exactly",
        not bad,
    )]


def _criterion_6c():
    common = dict(capacity_bps=10_000_000, buffer_pkts=40, duration_s=80.0)
    pinned = Scenario(
        name="degen-delay-pinned",
        flows=[FlowSpec(kind="ledbat", pacing=False, pin_zero_queuing_delay=True)],
        **common,
    )
    tcp = Scenario(name="degen-loss-based", flows=[FlowSpec(kind="tcp")], **common)
    r_pin = run_scenario(pinned)
    r_tcp = run_scenario(tcp)
    same = (
        r_pin.trace.cwnd_pkts[0] == r_tcp.trace.cwnd_pkts[0]
        and r_pin.trace.halvings[0] == r_tcp.trace.halvings[0]
        and r_pin.trace.drops == r_tcp.trace.drops
    )
    return [CriterionResult(
        "6c", "delay estimator pinned to zero degenerates to the loss-based law",
        "window trajectories bit-identical" if same else "trajectories diverge",
        "bit-identical window series, halvings, and drops",
        same,
    )]


def _criterion_6e(seed: int):
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    bounds_ok = True
    for _ in range(10_000):
        n = int(rng.integers(1, 9))
        x = rng.uniform(0.0, 100.0, size=n)
        if rng.uniform() < 0.2:
            x[rng.integers(0, n)] = 0.0
        if not x.any():
            x[0] = 1.0
        f = jain_fairness(x)
        if not (1.0 / n - 1e-12 <= f <= 1.0 + 1e-12):
            bounds_ok = False
        k = float(rng.uniform(1e-6, 1e6))
        rel = abs(jain_fairness(k * x) - f) / f
        worst_rel = max(worst_rel, rel)
    ok = bounds_ok and worst_rel <= 1e-12
    return [CriterionResult(
        "6e", "fairness index bounds and scale invariance (1e4 random vectors)",
        f"bounds {'ok' if bounds_ok else 'violated'}, worst relative drift {worst_rel:.2e}",
        "1/N <= F <= 1 and F(kx)=F(x) to 1e-12 relative",
        ok,
    )]


def _criterion_7():
    from . import cli
    scenario_text = (
        "ledbatsim-scenario v1\n"
        "name = determinism-probe\n"
        "capacity_mbps = 10\n"
        "buffer_pkts = 40\n"
        "duration_s = 40\n"
        "seed = 123\n"
        "delta_t_mode = uniform\n"
        "[flow]\n"
        "kind = tcp\n"
        "[flow]\n"
        "kind = ledbat\n"
    )
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        scn_path = tmp / "probe.scn"
        scn_path.write_text(scenario_text, encoding="utf-8")
        outs = []
        for sub in ("a", "b"):
            with contextlib.redirect_stdout(io.StringIO()):
                rc = cli.main([
                    "run", "--scenario", str(scn_path), "--out", str(tmp / sub),
                ])
            if rc != 0:
                return [CriterionResult(
                    "7", "run command is byte-deterministic",
                    f"run exited {rc}", "exit 0 twice with identical bytes", False,
                )]
            outs.append({
                p.name: p.read_bytes() for p in sorted((tmp / sub).iterdir())
            })
        same = outs[0] == outs[1]
    return [CriterionResult(
        "7", "run command is byte-deterministic",
        "trace and summary bytes identical" if same else "output bytes differ",
        "byte-identical files for the same seed",
        same,
    )]


def run_acceptance(table_runs: int = 20, seed: int = 7, jobs: int = 1,
                   progress=None) -> list[CriterionResult]:
    """Run every acceptance criterion; returns one result per criterion id."""
    results: list[CriterionResult] = []
    facts = []

    def scenario_run(preset: str) -> RunResult:
        r = run_scenario(replace(get_preset(preset), seed=seed))
        facts.append(extract_check_facts(r))
        if progress:
            progress(preset)
        return r

    fig2a = scenario_run("fig2a")
    tcp_alone = scenario_run("tcp-alone-hs-b40")
    fig2b = scenario_run("fig2b")
    fig3mid = scenario_run("fig3-mid")
    fig3bot = scenario_run("fig3-bottom")

    results += _criterion_1(fig2a, tcp_alone)
    results += _criterion_2(fig2b, fig2a)
    results += _criterion_3(fig3mid)
    results += _criterion_4(fig3bot)

    table_results, table_facts = _criterion_5(table_runs, seed, jobs, progress=None)
    results += table_results
    facts.extend(table_facts)

    # exact properties, pooled over every run above
    max_ratio = max(f.max_update_ratio for f in facts)
    results.append(CriterionResult(
        "6a", "per-ack window update never exceeds 1/cwnd",
        f"max update ratio {max_ratio!r} pkts",
        "<= 1.0 exactly", max_ratio <= 1.0,
    ))
    results += _criterion_6b()
    results += _criterion_6c()
    conservation = all(f.conservation_ok for f in facts)
    results.append(CriterionResult(
        "6d", "packet conservation at every sample of every run",
        "held everywhere" if conservation else "violated",
        "offered == delivered + dropped + queued + in service", conservation,
    ))
    results += _criterion_6e(seed)
    min_cwnd = min(f.min_sampled_cwnd for f in facts)
    results.append(CriterionResult(
        "6f", "window floor of one packet at every sample",
        f"min sampled window {min_cwnd}", ">= 1.0", min_cwnd >= 1.0,
    ))
    gaps = all(f.halving_gaps_ok for f in facts)
    results.append(CriterionResult(
        "6g", "window halvings at least one smoothed RTT apart",
        "all gaps >= gate" if gaps else "gap shorter than the RTT gate seen",
        "inter-halving time >= smoothed RTT", gaps,
    ))
    results += _criterion_7()

    order = {cid: i for i, cid in enumerate(CRITERIA_IDS)}
    results.sort(key=lambda r: order[r.cid])
    return results
