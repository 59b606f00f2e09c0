"""Episode runner: drops terminals, advances the cell slot by slot under
the current switching parameters, aggregates KPIs, steps the learning agent
and writes all run artifacts.

Randomness is organized as named substreams of the run seed so that
training, evaluation and the fixed-waveform baselines draw independent (or
deliberately shared) realizations: evaluation and baseline runs reuse the
same per-episode streams, which makes their fading traces slot-identical
and the comparisons paired. Every output is a pure function of
(config, seed).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .agent import (
    AgentConfig,
    QNetwork,
    ReplayBuffer,
    RewardSpec,
    build_state,
    compute_reward,
    decode_action,
    epsilon_at,
    select_action,
    train_step,
)
from .config import SimConfig
from .dpws_fsm import DpwsConfig, DpwsState, on_srs
from .kpi import (
    CellKpiReport,
    Histogram12,
    REWARD_FACTOR_IDS,
    SNR_BIN_EDGES,
    TA_BIN_EDGES,
    ThroughputStats,
    bin_snr,
    bin_ta,
    throughput_percentiles,
)
from .link_model import (
    CP_OFDM,
    DFT_S_OFDM,
    map_throughput,
    noise_power_dbm,
    path_loss_uma,
    precoded_gain,
    select_tx_port,
    sounding_gain,
    transmit_power,
)

# substream labels under the run seed
STREAM_TRAIN, STREAM_EVAL, STREAM_AGENT, STREAM_PAPR = 0, 1, 2, 3


@dataclass
class UeContext:
    """One dropped terminal: geometry, its frozen shadowing (folded into
    the path loss), the fading draw at drop time, the power-control
    outcome per waveform, and per-step outputs."""

    ue_id: int
    distance_m: float
    path_loss_db: float
    fading: np.ndarray
    tx_power_cp_dbm: float = 0.0
    tx_power_dfts_dbm: float = 0.0
    dpws: DpwsState = field(default_factory=DpwsState)
    # filled by simulate_step
    step_throughput_bps: float = 0.0
    bearing_slots: int = 0
    guard_slots_used: int = 0
    outage_slots: int = 0

    @property
    def in_outage(self) -> bool:
        """Whole transmission spent in outage (never carried throughput)."""
        return self.bearing_slots == 0 and self.outage_slots > 0


@dataclass
class EpisodeStreams:
    drop: np.random.Generator
    fading: np.random.Generator
    ta: np.random.Generator


def episode_streams(seed: int, lane: int, episode: int) -> EpisodeStreams:
    root = np.random.SeedSequence([seed, lane, episode])
    drop, fading, ta = [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(3)]
    return EpisodeStreams(drop=drop, fading=fading, ta=ta)


def agent_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, STREAM_AGENT])))


def drop_ues(cfg: SimConfig, rng: np.random.Generator) -> list[UeContext]:
    """Uniform distances in the configured annulus, per-terminal lognormal
    shadowing frozen for the episode, fresh fading; everyone starts on the
    multi-port waveform with a cleared switching machine."""
    n = cfg.episode.ues_per_episode
    cell = cfg.cell
    distances = rng.uniform(cell.min_distance_m, cell.max_distance_m, size=n)
    shadow = rng.normal(0.0, cell.shadowing_sigma_db, size=n)
    fading = (
        rng.standard_normal((n, cell.n_rx, 2)) + 1j * rng.standard_normal((n, cell.n_rx, 2))
    ) / np.sqrt(2.0)
    pl = path_loss_uma(distances, cell.carrier_ghz) + shadow
    p_cp = transmit_power(cfg.power, pl, CP_OFDM)
    p_df = transmit_power(cfg.power, pl, DFT_S_OFDM)
    return [
        UeContext(
            ue_id=i,
            distance_m=float(distances[i]),
            path_loss_db=float(pl[i]),
            fading=fading[i].copy(),
            tx_power_cp_dbm=float(p_cp[i]),
            tx_power_dfts_dbm=float(p_df[i]),
        )
        for i in range(n)
    ]


def simulate_step(
    ues: list[UeContext],
    fading: np.ndarray,
    zeta_db: float,
    xi_db: float,
    cfg: SimConfig,
    streams: EpisodeStreams,
    *,
    dpws_enabled: bool = True,
    events: list | None = None,
    episode: int = 0,
    slot_offset: int = 0,
    trace: dict | None = None,
) -> tuple[CellKpiReport, np.ndarray]:
    """Advance one step (slots_per_step slots) and aggregate its KPIs.

    Fading evolves every slot for every terminal regardless of switching
    decisions, so the channel trace for a given episode stream does not
    depend on the policy. Returns the report and the evolved fading array;
    per-terminal outcomes are written onto the contexts.
    """
    n = len(ues)
    cell, ep_cfg = cfg.cell, cfg.episode
    n_slots, srs_period = ep_cfg.slots_per_step, ep_cfg.srs_period_slots
    dpws_cfg = replace(cfg.dpws, zeta_db=zeta_db, xi_db=xi_db)
    n0 = noise_power_dbm(cell.noise())
    bandwidth = cell.noise().bandwidth_hz
    pl = np.array([ue.path_loss_db for ue in ues])
    dist = np.array([ue.distance_m for ue in ues])
    p_cp = transmit_power(cfg.power, pl, CP_OFDM)
    p_df = transmit_power(cfg.power, pl, DFT_S_OFDM)

    is_df = np.array([ue.dpws.waveform == DFT_S_OFDM for ue in ues])
    guard = np.array([ue.dpws.guard_remaining for ue in ues], dtype=np.int64)

    h = fading
    tp_slots = np.zeros((n_slots, n), dtype=float)
    bearing = np.zeros(n, dtype=np.int64)
    outage_ct = np.zeros(n, dtype=np.int64)
    guard_ct = np.zeros(n, dtype=np.int64)
    snr_hist = Histogram12(edges=SNR_BIN_EDGES)
    ta_hist = Histogram12(edges=TA_BIN_EDGES)
    gamma_sum, gamma_n = 0.0, 0
    rho = cell.fading_rho
    sqrt_term = np.sqrt(max(1.0 - rho * rho, 0.0))
    if trace is not None:
        trace["is_df"] = np.zeros((n_slots, n), dtype=bool)
        trace["silent"] = np.zeros((n_slots, n), dtype=bool)
        trace["tp"] = tp_slots

    for slot in range(n_slots):
        if rho < 1.0:
            w = (
                streams.fading.standard_normal((n, cell.n_rx, 2))
                + 1j * streams.fading.standard_normal((n, cell.n_rx, 2))
            ) / np.sqrt(2.0)
            h = rho * h + sqrt_term * w

        silent = guard > 0
        guard = np.maximum(guard - 1, 0)

        g_cp = precoded_gain(h)
        g_df = select_tx_port(h)
        gain = np.where(is_df, g_df, g_cp)
        p_out = np.where(is_df, p_df, p_cp)
        with np.errstate(divide="ignore"):
            snr = p_out - pl + 10.0 * np.log10(gain) - n0
        amc_snr = snr - np.where(is_df, cell.dfts_snr_penalty_db, 0.0)
        tp, outage = map_throughput(amc_snr, cfg.mcs, bandwidth)
        tp[silent] = 0.0
        tp_slots[slot] = tp
        bearing += (~silent) & (~outage)
        outage_ct += (~silent) & outage
        guard_ct += silent
        if trace is not None:
            trace["is_df"][slot] = is_df
            trace["silent"][slot] = silent

        if slot % srs_period == 0:
            active = ~silent
            if np.any(active):
                # sounding SNR on a waveform-independent power reference
                # (the multi-port cap), so a switch does not shift gamma by
                # the back-off gap and thresholds compare like with like
                with np.errstate(divide="ignore"):
                    gamma = p_cp - pl + 10.0 * np.log10(sounding_gain(h)) - n0
                ta = 100.0 * dist / cell.cell_range_m
                if cell.ta_jitter_pct > 0.0:
                    ta = ta + streams.ta.uniform(-cell.ta_jitter_pct, cell.ta_jitter_pct, n)
                ta = np.maximum(ta, 0.0)
                snr_hist = bin_snr(snr_hist, gamma[active])
                ta_hist = bin_ta(ta_hist, ta[active])
                gamma_sum += float(gamma[active].sum())
                gamma_n += int(active.sum())
                if dpws_enabled:
                    for i in np.nonzero(active)[0]:
                        st = ues[i].dpws
                        if st.guard_remaining != 0:
                            st = replace(st, guard_remaining=0)
                        st, switched = on_srs(st, dpws_cfg, float(gamma[i]))
                        ues[i].dpws = st
                        if switched:
                            guard[i] = st.guard_remaining
                            was_df = is_df[i]
                            is_df[i] = st.waveform == DFT_S_OFDM
                            if events is not None:
                                events.append(
                                    (
                                        episode,
                                        ues[i].ue_id,
                                        slot_offset + slot,
                                        DFT_S_OFDM if was_df else CP_OFDM,
                                        st.waveform,
                                    )
                                )

    for i, ue in enumerate(ues):
        ue.dpws = replace(ue.dpws, guard_remaining=int(guard[i]))
        ue.step_throughput_bps = float(tp_slots[:, i].mean())
        ue.bearing_slots = int(bearing[i])
        ue.outage_slots = int(outage_ct[i])
        ue.guard_slots_used = int(guard_ct[i])

    # cell throughput distribution over terminals; scheduling drops
    # terminals that spent the whole transmission in outage
    included = bearing > 0
    stats = throughput_percentiles(tp_slots.mean(axis=0)[included])
    mean_gamma = gamma_sum / gamma_n if gamma_n else float("nan")
    report = CellKpiReport(
        snr_hist=snr_hist, ta_hist=ta_hist, throughput=stats, mean_gamma_db=mean_gamma
    )
    return report, h


# ---------------------------------------------------------------------------
# run artifacts

KPI_HEADER = (
    ["episode", "step", "zeta_db", "xi_db", "mean_snr_db"]
    + [f"snr_bin_{i}" for i in range(1, 13)]
    + [f"ta_bin_{i}" for i in range(1, 13)]
    + list(REWARD_FACTOR_IDS)
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


class RunWriter:
    """Owns one output directory and its CSV artifacts."""

    def __init__(self, outdir: str | Path, cfg: SimConfig, mode: str):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "tool": "dpwsim",
            "version": __version__,
            "mode": mode,
            "seed": cfg.seed,
            "config": cfg.describe(),
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self._kpi = open(self.dir / "kpi_steps.csv", "w", newline="")
        self._kpi_csv = csv.writer(self._kpi)
        self._kpi_csv.writerow(KPI_HEADER)

    def kpi_row(self, episode: int, step: int, zeta: float, xi: float, report: CellKpiReport):
        row = (
            [episode, step, zeta, xi, report.mean_gamma_db]
            + [int(c) for c in report.snr_hist.counts]
            + [int(c) for c in report.ta_hist.counts]
            + list(report.throughput.as_array())
        )
        self._kpi_csv.writerow([_fmt(v) for v in row])

    def events(self, rows) -> None:
        with open(self.dir / "switch_events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "ue_id", "slot", "from_waveform", "to_waveform"])
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def ue_samples(self, rows) -> None:
        with open(self.dir / "ue_samples.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "ue_id", "distance_m", "final_waveform", "throughput_bps"])
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def throughput_stats(self, stats: ThroughputStats) -> None:
        with open(self.dir / "throughput_stats.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["factor", "throughput_bps"])
            for name, value in zip(REWARD_FACTOR_IDS, stats.as_array()):
                w.writerow([name, _fmt(float(value))])

    def close(self) -> None:
        self._kpi.close()


def _write_training_log(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "epsilon", "loss", "reward"])
        for row in rows:
            w.writerow(["" if v is None else _fmt(v) for v in row])


# ---------------------------------------------------------------------------
# run modes


def run_training(cfg: SimConfig, outdir: str | Path) -> Path:
    """Full training run; returns the checkpoint path."""
    writer = RunWriter(outdir, cfg, "train")
    rng = agent_rng(cfg.seed)
    qnet = QNetwork(rng, cfg.agent)
    buffer = ReplayBuffer(cfg.agent.buffer_size)
    reward_spec = RewardSpec(theta=cfg.agent.theta, clip=cfg.agent.reward_clip)
    ep_cfg = cfg.episode
    total_steps = ep_cfg.train_episodes * ep_cfg.train_steps
    events: list = []
    log_rows = []
    global_step = 0
    episode_rewards = []

    for episode in range(ep_cfg.train_episodes):
        streams = episode_streams(cfg.seed, STREAM_TRAIN, episode)
        ues = drop_ues(cfg, streams.drop)
        fading = np.stack([ue.fading for ue in ues])
        zeta, xi = cfg.dpws.zeta_db, cfg.dpws.xi_db
        prev_state = None
        prev_stats = None
        ep_reward = 0.0
        for step in range(ep_cfg.train_steps):
            eps = epsilon_at(
                global_step, total_steps, cfg.agent.epsilon_start, cfg.agent.epsilon_min
            )
            action = None
            if step > 0:
                action = select_action(qnet, prev_state, eps, rng)
                zeta, xi = decode_action(action, zeta, xi, cfg.agent)
            report, fading = simulate_step(
                ues,
                fading,
                zeta,
                xi,
                cfg,
                streams,
                events=events,
                episode=episode,
                slot_offset=step * ep_cfg.slots_per_step,
            )
            state = build_state(report, zeta, xi)
            reward = None
            loss = None
            if step > 0:
                reward = compute_reward(prev_stats, report.throughput, reward_spec)
                buffer.push(prev_state, action, reward, state)
                loss = train_step(qnet, buffer, rng)
                ep_reward += reward
            writer.kpi_row(episode, step, zeta, xi, report)
            log_rows.append((global_step, eps, loss, reward))
            prev_state = state
            prev_stats = report.throughput
            global_step += 1
        episode_rewards.append(ep_reward)

    ckpt = writer.dir / "checkpoint.txt"
    qnet.save(ckpt)
    writer.events(events)
    _write_training_log(writer.dir / "training_log.csv", log_rows)
    with open(writer.dir / "episode_rewards.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "total_reward"])
        for i, r in enumerate(episode_rewards):
            w.writerow([i, _fmt(r)])
    writer.close()
    return ckpt


def _policy_episode(
    cfg: SimConfig, episode: int, params: list[np.ndarray] | None, fixed_waveform: str | None
):
    """One greedy-policy or fixed-waveform episode; returns (kpi rows,
    per-terminal final-step samples, switch events)."""
    qnet = None
    if params is not None:
        qnet = QNetwork(np.random.default_rng(0), cfg.agent)
        for target, src in zip(qnet.parameters(), params):
            target[...] = src
    streams = episode_streams(cfg.seed, STREAM_EVAL, episode)
    ues = drop_ues(cfg, streams.drop)
    if fixed_waveform is not None:
        for ue in ues:
            ue.dpws = DpwsState(waveform=fixed_waveform)
    fading = np.stack([ue.fading for ue in ues])
    zeta, xi = cfg.dpws.zeta_db, cfg.dpws.xi_db
    events: list = []
    rows = []
    prev_state = None
    for step in range(cfg.episode.eval_steps):
        if step > 0 and qnet is not None:
            action = int(np.argmax(qnet.forward(prev_state)))
            zeta, xi = decode_action(action, zeta, xi, cfg.agent)
        report, fading = simulate_step(
            ues,
            fading,
            zeta,
            xi,
            cfg,
            streams,
            dpws_enabled=fixed_waveform is None,
            events=events,
            episode=episode,
            slot_offset=step * cfg.episode.slots_per_step,
        )
        if qnet is not None:
            prev_state = build_state(report, zeta, xi)
        rows.append((episode, step, zeta, xi, report))
    samples = [
        (episode, ue.ue_id, ue.distance_m, ue.dpws.waveform, ue.step_throughput_bps)
        for ue in ues
        if ue.bearing_slots > 0
    ]
    return rows, samples, events


def _run_policy(
    cfg: SimConfig,
    outdir: str | Path,
    mode: str,
    params: list[np.ndarray] | None,
    fixed_waveform: str | None,
    jobs: int = 1,
) -> ThroughputStats:
    writer = RunWriter(outdir, cfg, mode)
    episodes = range(cfg.episode.eval_episodes)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    _policy_episode,
                    [cfg] * len(episodes),
                    episodes,
                    [params] * len(episodes),
                    [fixed_waveform] * len(episodes),
                )
            )
    else:
        results = [_policy_episode(cfg, ep, params, fixed_waveform) for ep in episodes]

    all_events: list = []
    all_samples: list = []
    for rows, samples, events in results:
        for episode, step, zeta, xi, report in rows:
            writer.kpi_row(episode, step, zeta, xi, report)
        all_samples.extend(samples)
        all_events.extend(events)
    writer.events(all_events)
    writer.ue_samples(all_samples)
    stats = throughput_percentiles([s[4] for s in all_samples])
    writer.throughput_stats(stats)
    writer.close()
    return stats


def run_evaluation(
    cfg: SimConfig, outdir: str | Path, checkpoint: str | Path, jobs: int = 1
) -> ThroughputStats:
    """Greedy evaluation of a trained network on independent drops."""
    ckpt = Path(checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    qnet = QNetwork.load(ckpt, replace(cfg.agent))
    return _run_policy(cfg, outdir, "evaluate", qnet.parameters(), None, jobs)


def run_baseline(
    cfg: SimConfig, outdir: str | Path, waveform: str, jobs: int = 1
) -> ThroughputStats:
    """Fixed-waveform reference run on the evaluation drops."""
    if waveform not in (CP_OFDM, DFT_S_OFDM):
        raise ValueError(f"unknown waveform {waveform!r}")
    return _run_policy(cfg, outdir, f"baseline-{waveform}", None, waveform, jobs)


def compare_runs(dir_a: str | Path, dir_b: str | Path) -> list[tuple]:
    """Per-factor relative (%) and absolute (Mbps) gains of run A over B."""

    def read(d):
        path = Path(d) / "throughput_stats.csv"
        if not path.is_file():
            raise FileNotFoundError(f"missing stats file: {path}")
        out = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out[row["factor"]] = float(row["throughput_bps"])
        return out

    a, b = read(dir_a), read(dir_b)
    if list(a) != list(b) or list(a) != list(REWARD_FACTOR_IDS):
        raise ValueError("percentile sets of the two runs do not match")
    rows = []
    for factor in REWARD_FACTOR_IDS:
        va, vb = a[factor], b[factor]
        rel = (va - vb) / vb * 100.0 if vb != 0.0 else float("inf")
        rows.append((factor, va, vb, rel, (va - vb) / 1e6))
    return rows


def write_comparison(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["factor", "a_bps", "b_bps", "gain_pct", "gain_mbps"])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
