"""Config-driven experiment runner.

Experiments are described in INI-style files (see configs/ for the bundled
scenarios).  A run executes every (policy, arrival mean, replication) cell
with common random numbers across policies, appends rows to a versioned
CSV, and writes a manifest tying the output to the config hash and seed.

CSV schemas
    harvestsim-results v1       single-node and orthogonal-MAC rows:
        experiment_id, policy, arrival_mean, replication, mean_q,
        mean_delay, verdict, wasted_energy_rate, drop_rate, runtime
    harvestsim-results v1-csma  contention rows:
        experiment_id, policy, arrival_mean, replication, mean_delay,
        loss_probability, collision_rate, airtime, runtime

The runtime column is the simulated horizon (slots), so reruns with equal
seeds are byte-identical; wall-clock time lives in the manifest.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .csma import BackoffSpec, CsmaConfig, calibrate_beta, run_csma
from .distributions import DistributionSpec, RandomStream
from .mac import MacNode, SchedulerSpec, run_mac
from .mdp import (MdpConfig, TablePolicy, build_transition,
                  relative_value_iteration)
from .node_sim import NodeSimConfig, run as run_node
from .policies import PolicySpec
from .rates import RateFunction

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "parse_config",
    "run_experiment",
    "list_experiments",
    "bundled_config_path",
    "SCHEMA_V1",
    "SCHEMA_CSMA",
]

SCHEMA_V1 = "harvestsim-results v1"
SCHEMA_CSMA = "harvestsim-results v1-csma"
V1_COLUMNS = ["experiment_id", "policy", "arrival_mean", "replication",
              "mean_q", "mean_delay", "verdict", "wasted_energy_rate",
              "drop_rate", "runtime"]
CSMA_COLUMNS = ["experiment_id", "policy", "arrival_mean", "replication",
                "mean_delay", "loss_probability", "collision_rate",
                "airtime", "runtime"]

SCENARIOS = ("single-node", "single-node-fading", "mac-orthogonal", "csma")
OUTPUT_ENV_VAR = "HARVESTSIM_OUT"


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass
class PolicyEntry:
    name: str
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    waterfilling: bool = False


@dataclass
class ExperimentConfig:
    experiment_id: str
    scenario: str
    seed: int
    horizon: int
    warmup: Optional[int]
    replications: int
    rf: RateFunction
    x_spec: DistributionSpec
    y_spec: DistributionSpec
    h_spec: Optional[DistributionSpec]
    z_spec: Optional[DistributionSpec]
    sweep: Tuple[float, ...]
    policies: Tuple[PolicyEntry, ...]
    n_nodes: int = 1
    data_buffer_cap: float = math.inf
    energy_buffer_cap: float = math.inf
    quantize_step: float = 0.0
    mdp_alpha: float = 0.9
    csma_calibration_target: float = 1.55
    csma_calibration_arrival: float = 0.17
    source_text: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()


# -- parsing --------------------------------------------------------------------

_KNOWN = {
    "experiment": {"id", "scenario", "seed", "horizon", "warmup",
                   "replications", "nodes", "data_buffer_cap",
                   "energy_buffer_cap", "quantize_step"},
    "rate_function": {"kind", "gamma", "beta", "half_factor", "log_base"},
    "arrivals": {"kind", "mean", "cap", "shape", "renormalize", "atoms"},
    "harvest": {"kind", "mean", "cap", "shape", "renormalize", "atoms"},
    "fading": {"kind", "mean", "cap", "shape", "renormalize", "atoms"},
    "sensing": {"kind", "mean", "cap", "shape", "renormalize", "atoms"},
    "sweep": {"min", "max", "step", "values"},
    "policies": {"names"},
    "mdp": {"alpha"},
    "csma": {"calibration_target", "calibration_arrival"},
}
_POLICY_KEYS = {"kind", "c", "epsilon", "hbar", "p_hbar", "c_rate",
                "waterfilling", "queue_threshold", "beta_policy", "tau_max",
                "divided_budget"}


def _fail(msg: str) -> None:
    raise ConfigError(msg)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        _fail(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        _fail(f"{path}: {exc}")

    for section in parser.sections():
        base = "policy" if section.startswith("policy.") else section
        known = _POLICY_KEYS if base == "policy" else _KNOWN.get(base)
        if known is None:
            _fail(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in known:
                _fail(f"{path}: unknown key '{key}' in [{section}]")

    if "experiment" not in parser or "scenario" not in parser["experiment"]:
        _fail(f"{path}: missing scenario")
    exp = parser["experiment"]
    scenario = exp["scenario"]
    if scenario not in SCENARIOS:
        _fail(f"{path}: unknown scenario {scenario!r}")

    rf = _parse_rate_function(parser)
    x_spec = _parse_dist(parser, "arrivals", required=True)
    y_spec = _parse_dist(parser, "harvest", required=True)
    h_spec = _parse_dist(parser, "fading", required=False)
    z_spec = _parse_dist(parser, "sensing", required=False)
    sweep = _parse_sweep(parser, x_spec)
    policies = _parse_policies(parser)

    try:
        cfg = ExperimentConfig(
            experiment_id=exp.get("id", path.stem),
            scenario=scenario,
            seed=exp.getint("seed", 20240817),
            horizon=exp.getint("horizon", 1_000_000),
            warmup=exp.getint("warmup") if "warmup" in exp else None,
            replications=exp.getint("replications", 1),
            rf=rf, x_spec=x_spec, y_spec=y_spec, h_spec=h_spec, z_spec=z_spec,
            sweep=sweep, policies=policies,
            n_nodes=exp.getint("nodes", 1),
            data_buffer_cap=exp.getfloat("data_buffer_cap", math.inf),
            energy_buffer_cap=exp.getfloat("energy_buffer_cap", math.inf),
            quantize_step=exp.getfloat("quantize_step", 0.0),
            mdp_alpha=(parser.getfloat("mdp", "alpha", fallback=0.9)),
            csma_calibration_target=parser.getfloat(
                "csma", "calibration_target", fallback=1.55),
            csma_calibration_arrival=parser.getfloat(
                "csma", "calibration_arrival", fallback=0.17),
            source_text=text,
        )
    except ValueError as exc:
        _fail(f"{path}: {exc}")
    if cfg.replications < 1:
        _fail(f"{path}: replications must be >= 1")
    if not cfg.sweep:
        _fail(f"{path}: empty arrival sweep")
    # construct every policy once so parameter errors surface at parse time
    for entry in cfg.policies:
        try:
            if cfg.scenario == "mac-orthogonal":
                _mac_spec(entry, cfg.n_nodes)
            elif cfg.scenario == "csma":
                BackoffSpec(kind={"baseline": "exponential-baseline"}.get(
                    entry.kind, entry.kind))
            else:
                _build_single_policy(cfg, entry, probe=True)
        except ValueError as exc:
            _fail(f"{path}: policy {entry.name!r}: {exc}")
    return cfg


def _parse_rate_function(parser) -> RateFunction:
    if "rate_function" not in parser:
        _fail("missing [rate_function] section")
    sec = parser["rate_function"]
    kind = sec.get("kind", "log")
    if kind == "linear":
        return RateFunction(kind="linear", gamma=sec.getfloat("gamma", 1.0))
    base_raw = sec.get("log_base", "e")
    log_base = math.e if base_raw.strip() == "e" else float(base_raw)
    return RateFunction(kind="log", beta=sec.getfloat("beta", 1.0),
                        half_factor=sec.getboolean("half_factor", False),
                        log_base=log_base)


def _parse_dist(parser, section: str, required: bool) -> Optional[DistributionSpec]:
    if section not in parser:
        if required:
            _fail(f"missing [{section}] section")
        return None
    sec = parser[section]
    kind = sec.get("kind")
    if kind is None:
        _fail(f"[{section}] needs a kind")
    try:
        if kind == "deterministic":
            return DistributionSpec.deterministic(sec.getfloat("mean", 0.0))
        if kind == "exponential":
            return DistributionSpec.exponential(sec.getfloat("mean", 1.0))
        if kind == "truncated-poisson":
            return DistributionSpec.truncated_poisson(
                sec.getfloat("mean", 1.0), sec.getint("cap", 5),
                renormalize=sec.getboolean("renormalize", False))
        if kind == "erlang":
            return DistributionSpec.erlang(sec.getfloat("mean", 1.0),
                                           sec.getint("shape", 5))
        if kind == "hyperexponential":
            return DistributionSpec.hyperexponential(sec.getfloat("mean", 1.0))
        if kind == "discrete":
            atoms = []
            for chunk in sec.get("atoms", "").split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                value, prob = chunk.split(":")
                atoms.append((float(value), float(prob)))
            return DistributionSpec.discrete(atoms)
    except ValueError as exc:
        _fail(f"[{section}]: {exc}")
    _fail(f"[{section}]: unknown distribution kind {kind!r}")


def _parse_sweep(parser, x_spec) -> Tuple[float, ...]:
    if "sweep" not in parser:
        return (x_spec.mean,)
    sec = parser["sweep"]
    if "values" in sec:
        return tuple(float(v) for v in sec["values"].split(","))
    lo, hi = sec.getfloat("min"), sec.getfloat("max")
    step = sec.getfloat("step")
    if lo is None or hi is None or step is None or step <= 0:
        _fail("[sweep] needs min, max and a positive step (or values)")
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 12) for i in range(n + 1))


def _parse_policies(parser) -> Tuple[PolicyEntry, ...]:
    if "policies" not in parser or "names" not in parser["policies"]:
        _fail("missing [policies] names")
    entries = []
    for name in parser["policies"]["names"].split(","):
        name = name.strip()
        if not name:
            continue
        section = f"policy.{name}"
        params: Dict[str, float] = {}
        kind = name
        waterfilling = False
        if section in parser:
            for key, value in parser[section].items():
                if key == "kind":
                    kind = value
                elif key == "waterfilling":
                    waterfilling = parser[section].getboolean("waterfilling")
                else:
                    try:
                        params[key] = float(value)
                    except ValueError:
                        params[key] = value.strip().lower() in ("true", "yes",
                                                                "on", "1")
        entries.append(PolicyEntry(name=name, kind=kind, params=params,
                                   waterfilling=waterfilling))
    if not entries:
        _fail("empty policy list")
    return tuple(entries)


# -- policy construction -------------------------------------------------------------


def _build_single_policy(cfg: ExperimentConfig, entry: PolicyEntry,
                         arrival_mean: float = 1.0, probe: bool = False):
    """PolicySpec (or solver-backed table) for a single-node scenario."""
    kind, p = entry.kind, entry.params
    ey = cfg.y_spec.exact_mean
    rf = cfg.rf
    eps = p.get("epsilon")
    if cfg.scenario in ("mac-orthogonal", "csma"):
        return None  # handled by their own builders
    try:
        if kind == "unbuffered":
            return PolicySpec.unbuffered(rf)
        if kind == "greedy":
            return PolicySpec.greedy(rf)
        if kind == "to":
            return PolicySpec.to(ey, rf, epsilon=eps)
        if kind == "unfaded-to":
            return PolicySpec.to(ey, rf, epsilon=eps, unfaded=True)
        if kind == "mto":
            return PolicySpec.mto(ey, rf, c=p.get("c", 0.1), epsilon=eps)
        if kind in ("wf", "mwf"):
            if cfg.h_spec is None:
                raise ValueError(f"{kind} needs a [fading] section")
            return PolicySpec.wf(ey, rf, cfg.h_spec, epsilon=eps,
                                 modified=(kind == "mwf"),
                                 c=p.get("c", 0.1))
        if kind == "fading-linear-to":
            return PolicySpec.fading_linear_to(
                ey, rf, hbar=p["hbar"], p_hbar=p["p_hbar"], epsilon=eps)
        if kind == "constant-rate":
            return PolicySpec.constant_rate(p["c_rate"], rf)
        if kind == "mdp-op":
            if cfg.x_spec.kind != "truncated-poisson" or not cfg.quantize_step:
                raise ValueError(
                    "mdp-op needs truncated-poisson arrivals and a quantize "
                    "grid")
            if probe:
                return None
            return _solve_mdp_policy(cfg, arrival_mean)
    except KeyError as exc:
        raise ConfigError(
            f"policy {entry.name!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown single-node policy kind {kind!r}")


_MDP_CACHE: Dict[Tuple, TablePolicy] = {}


def _mdp_config(cfg: ExperimentConfig, arrival_mean: float) -> MdpConfig:
    x_pmf = _pmf(cfg.x_spec.scaled_to(arrival_mean))
    y_pmf = _pmf(cfg.y_spec)
    return MdpConfig(rf=cfg.rf, x_pmf=x_pmf, y_pmf=y_pmf,
                     q_cap=cfg.data_buffer_cap, e_cap=cfg.energy_buffer_cap,
                     q_step=cfg.quantize_step, e_step=cfg.quantize_step,
                     alpha=cfg.mdp_alpha)


def _solve_mdp_policy(cfg: ExperimentConfig, arrival_mean: float) -> TablePolicy:
    key = (cfg.config_hash, arrival_mean)
    if key not in _MDP_CACHE:
        mdp_cfg = _mdp_config(cfg, arrival_mean)
        kernel = build_transition(mdp_cfg)
        sol = relative_value_iteration(mdp_cfg, kernel, tol=1e-6)
        _MDP_CACHE[key] = TablePolicy(sol.action_energy(kernel),
                                      mdp_cfg.q_step, mdp_cfg.e_step)
    return _MDP_CACHE[key]


def _pmf(d: DistributionSpec) -> Tuple[Tuple[float, float], ...]:
    values, probs = d.atoms()
    return tuple((float(v), float(p)) for v, p in zip(values, probs))


# -- execution -------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   seed: Optional[int] = None,
                   horizon: Optional[int] = None) -> Dict[str, str]:
    """Execute all cells and write results CSV + manifest; returns paths."""
    out_root = Path(out_dir or os.environ.get(OUTPUT_ENV_VAR, "results"))
    out_root.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if horizon is not None:
        cfg = replace(cfg, horizon=horizon)

    started = time.time()
    if cfg.scenario in ("single-node", "single-node-fading"):
        schema, columns, rows = SCHEMA_V1, V1_COLUMNS, _run_single_node(cfg)
    elif cfg.scenario == "mac-orthogonal":
        schema, columns, rows = SCHEMA_V1, V1_COLUMNS, _run_mac_orth(cfg)
    else:
        schema, columns, rows = SCHEMA_CSMA, CSMA_COLUMNS, _run_csma_exp(cfg)

    # rows are appended as cells complete; a failure leaves the partial
    # results behind with an explicit marker
    csv_path = out_root / f"{cfg.experiment_id}.csv"
    n_rows = 0
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# {schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        try:
            for row in rows:
                writer.writerow(row)
                n_rows += 1
        except Exception as exc:
            fh.write(f"# FAILED after {n_rows} rows: {exc}\n")
            raise
    wall = time.time() - started

    manifest_path = out_root / f"{cfg.experiment_id}.manifest.json"
    manifest = {
        "experiment_id": cfg.experiment_id,
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "code_version": __version__,
        "schema": schema,
        "rows": n_rows,
        "wall_time_s": round(wall, 3),
        "output_csv": csv_path.name,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return {"csv": str(csv_path), "manifest": str(manifest_path)}


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_single_node(cfg: ExperimentConfig):
    for entry in cfg.policies:
        for arrival in cfg.sweep:
            policy = _build_single_policy(cfg, entry, arrival_mean=arrival)
            for rep in range(cfg.replications):
                sim_cfg = NodeSimConfig(
                    x_dist=cfg.x_spec.scaled_to(arrival),
                    y_dist=cfg.y_spec, z_dist=cfg.z_spec, h_dist=cfg.h_spec,
                    rf=cfg.rf, policy=policy,
                    data_buffer_cap=cfg.data_buffer_cap,
                    energy_buffer_cap=cfg.energy_buffer_cap,
                    horizon=cfg.horizon, warmup=cfg.warmup,
                    seed=cfg.seed, stream_id=rep,
                    quantize_step=cfg.quantize_step)
                r = run_node(sim_cfg)
                yield [cfg.experiment_id, entry.name, _fmt(arrival),
                       rep, _fmt(r.mean_q), _fmt(r.mean_delay),
                       r.stability_verdict,
                       _fmt(r.wasted_energy_rate), _fmt(r.drop_rate),
                       cfg.horizon]


def _mac_spec(entry: PolicyEntry, n_nodes: int) -> SchedulerSpec:
    p = entry.params
    kwargs = dict(use_waterfilling=entry.waterfilling,
                  share_divided_budget=bool(p.get("divided_budget", True)),
                  lms_mu=p.get("lms_mu", 0.01),
                  lms_update_period=int(p.get("lms_update_period", 40)))
    if entry.kind == "tdma":
        return SchedulerSpec(kind="tdma", alphas=(1.0 / n_nodes,) * n_nodes,
                             **kwargs)
    if entry.kind == "modified-greedy":
        return SchedulerSpec(kind="modified-greedy",
                             queue_threshold=p.get("queue_threshold", 10.0),
                             **kwargs)
    return SchedulerSpec(kind=entry.kind, **kwargs)


def _run_mac_orth(cfg: ExperimentConfig):
    for entry in cfg.policies:
        spec = _mac_spec(entry, cfg.n_nodes)
        for arrival in cfg.sweep:
            for rep in range(cfg.replications):
                nodes = [MacNode(node_id=i,
                                 x_dist=cfg.x_spec.scaled_to(arrival),
                                 y_dist=cfg.y_spec, h_dist=cfg.h_spec,
                                 rf=cfg.rf)
                         for i in range(cfg.n_nodes)]
                results = run_mac(nodes, spec, cfg.horizon,
                                  seed=cfg.seed + rep, warmup=cfg.warmup)
                mean_q = float(np.mean([r.mean_q for r in results]))
                delay = mean_q / arrival if arrival > 0 else 0.0
                verdicts = [r.stability_verdict for r in results]
                if "unstable" in verdicts:
                    verdict = "unstable"
                elif all(v == "stable" for v in verdicts):
                    verdict = "stable"
                else:
                    verdict = "inconclusive"
                yield [cfg.experiment_id, entry.name, _fmt(arrival),
                       rep, _fmt(mean_q), _fmt(delay), verdict,
                       _fmt(0.0), _fmt(0.0), cfg.horizon]


def _csma_spec(cfg: ExperimentConfig, entry: PolicyEntry) -> BackoffSpec:
    p = entry.params
    kind = {"baseline": "exponential-baseline",
            "channel-aware": "channel-aware",
            "queue-channel-aware": "queue-channel-aware"}.get(entry.kind,
                                                              entry.kind)
    beta = p.get("beta_policy")
    if beta is None and kind != "exponential-baseline":
        beta = _calibrated_beta(cfg)
    return BackoffSpec(kind=kind, beta_policy=beta or 1.0,
                       tau_max=p.get("tau_max", 20.0),
                       use_waterfilling=entry.waterfilling,
                       base_window=2.0 * cfg.csma_calibration_target)


_BETA_CACHE: Dict[str, float] = {}


def _calibrated_beta(cfg: ExperimentConfig) -> float:
    """Backoff scale with mean backoff = target under the channel-score law.

    The score distribution of the channel-aware family does not depend on
    the arrival rate; the queue-weighted family reuses the same scale (its
    queue factor only sharpens priorities around it).
    """
    if cfg.config_hash not in _BETA_CACHE:
        from .distributions import _bits_vec
        rs = RandomStream(cfg.seed, 777)
        hs = cfg.h_spec.sample_array(rs, 10 ** 6)
        budget = cfg.y_spec.exact_mean * 0.99 / (1.0 / cfg.n_nodes)
        sample_scores = _bits_vec(cfg.rf, hs * budget)
        _BETA_CACHE[cfg.config_hash] = calibrate_beta(
            sample_scores, cfg.csma_calibration_target, 20.0)
    return _BETA_CACHE[cfg.config_hash]


def _run_csma_exp(cfg: ExperimentConfig):
    for entry in cfg.policies:
        spec = _csma_spec(cfg, entry)
        for arrival in cfg.sweep:
            for rep in range(cfg.replications):
                csma_cfg = CsmaConfig(
                    n_nodes=cfg.n_nodes, arrival_rate=arrival,
                    y_dist=cfg.y_spec, h_dist=cfg.h_spec, rf=cfg.rf,
                    data_buffer_cap=int(cfg.data_buffer_cap)
                    if math.isfinite(cfg.data_buffer_cap) else 50,
                    horizon=float(cfg.horizon), seed=cfg.seed + rep)
                results, collisions = run_csma(csma_cfg, spec)
                delay = float(np.nanmean([r.mean_delay for r in results]))
                loss = float(np.mean([r.loss_probability for r in results]))
                yield [cfg.experiment_id, entry.name, _fmt(arrival),
                       rep, _fmt(delay), _fmt(loss),
                       _fmt(collisions / cfg.horizon),
                       _fmt(sum(r.airtime for r in results)),
                       cfg.horizon]


# -- catalog ---------------------------------------------------------------------------

CATALOG = [
    ("fig2", "quantized single node, truncated-Poisson traffic, "
             "delay-optimal table policy vs greedy vs throughput-optimal"),
    ("fig3", "single node, linear rate map, exponential traffic: all "
             "policies share the stability bound at 10 bits/slot"),
    ("fig4", "single node, log rate map, E[Y]=10: greedy saturates at "
             "E[bits(Y)]=2.01, margin policies at bits(E[Y])=2.40"),
    ("fig7", "fading single node, linear map, Hyperexponential(5) traffic: "
             "best-state-only policy trades delay for a larger region"),
    ("fig8", "fading single node, log map, Erlang(5) traffic: water-filling "
             "variants stable for E[X] < 0.70"),
    ("orth3", "three-queue orthogonal MAC, exponential fading: TDMA vs "
              "opportunistic schedulers, water-filling variants"),
    ("csma10", "ten contending nodes, four-state fading, mean backoff "
               "calibrated to 1.55: backoff families ordered by delay"),
]


def bundled_config_path(name: str) -> Path:
    ref = resources.files("harvestsim").joinpath(f"configs/{name}.cfg")
    with resources.as_file(ref) as path:
        return Path(path)


def list_experiments() -> List[Tuple[str, str, str]]:
    """(name, description, acceptance note) for each bundled experiment."""
    notes = {
        "fig2": "delay-optimal <= throughput-optimal mean queue pointwise",
        "fig4": "greedy flips unstable between E[X]=1.9 and 2.2; "
                "margin policies between 2.3 and 2.55",
        "fig8": "water-filling variants stable for E[X] < 0.70",
        "orth3": "drainable-bits scheduler outlasts TDMA; water-filling "
                 "widens both",
        "csma10": "mean delay: baseline > channel-aware > queue-aware, "
                  "water-filling best",
    }
    out = []
    for name, desc in CATALOG:
        schema = SCHEMA_CSMA if name == "csma10" else SCHEMA_V1
        note = notes.get(name, "qualitative policy ordering")
        out.append((name, desc, f"{note} [{schema}]"))
    return out
