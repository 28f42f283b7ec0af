"""Experiment harness: config files, trials, sweeps, and diagnostics.

Configs are flat ``key=value`` text (``#`` comments allowed); every key can
be overridden on the command line with ``--set key=value``.  Supported
keys: ``n, k, k_c, sigma_s, m, snr_db | sigma_v (exactly one), alpha,
beta, lambda, cost_hard, cost_value, trials, seed, protocols,
epsilon_mode, sweep_param, sweep_values``.

``epsilon_mode`` picks the data-fit radius handed to the censored
reconstructions: ``calibrated`` (default) uses the selection-aware budget
from ``fusion.calibrated_epsilon``; ``policy`` uses the unconditional
``fusion.epsilon_policy`` over the sent-value count.  The uncensored
baseline always uses the unconditional policy over all nodes, where the
two notions coincide.

Subcommands:

* ``thresholds``: censoring design report for one configuration,
* ``trial``: one simulated network snapshot end to end,
* ``sweep``: Monte-Carlo sweep over one parameter, CSV out,
* ``rip-check``: spectral diagnostics of one snapshot's recovery operator,
* ``oracle-check``: closed-form thresholds against the grid-search oracle.

Exit codes: 0 success, 2 configuration error, 3 solver failure fraction
above 5% during a sweep.

Every random draw comes from a substream keyed by (seed, trial) for the
scene and (seed, trial, node + 1) for each node, so trial records are
independent of scheduling order and any subset of trials can be reproduced
in isolation.  Sweep rows are emitted in sweep-value order with trials
aggregated in index order, which makes the CSV byte-stable across runs.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import analysis, censor, fusion, model, recovery

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "parse_config_text",
    "build_config",
    "run_trial",
    "run_sweep",
    "cmd_thresholds",
    "cmd_trial",
    "cmd_oracle_check",
    "cmd_rip_check",
    "main",
]

PROTOCOLS = ("cs_l1", "csc_l1", "csc_modified_l1")
SWEEPABLE = ("m", "snr_db", "alpha", "beta", "lambda")
EPSILON_MODES = ("calibrated", "policy")
MAX_FAILURE_FRACTION = 0.05


class ConfigError(Exception):
    """Invalid configuration (bad key, bad value, missing field)."""


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    k: int
    k_c: int
    sigma_s: float
    m: int
    alpha: float
    beta: float
    snr_db: float | None = None
    sigma_v: float | None = None
    weight: float = 1.0          # config key "lambda"
    cost_hard: float = 1.0
    cost_value: float = 2.0
    trials: int = 200
    seed: int = 0
    protocols: tuple[str, ...] = PROTOCOLS
    epsilon_mode: str = "calibrated"
    sweep_param: str | None = None
    sweep_values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if (self.snr_db is None) == (self.sigma_v is None):
            raise ConfigError("exactly one of snr_db and sigma_v must be set")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad or not self.protocols:
            raise ConfigError(f"protocols must be a nonempty subset of {PROTOCOLS}")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ConfigError(f"epsilon_mode must be one of {EPSILON_MODES}")
        if self.sweep_param is not None and self.sweep_param not in SWEEPABLE:
            raise ConfigError(f"sweep_param must be one of {SWEEPABLE}")

    def model_params(self) -> model.ModelParams:
        sigma_v = self.sigma_v
        if sigma_v is None:
            sigma_v = model.sigma_v_from_snr(self.snr_db, self.n, self.k, self.sigma_s)
        try:
            return model.ModelParams(
                n=self.n, k=self.k, k_c=self.k_c,
                sigma_s=self.sigma_s, sigma_v=sigma_v, m=self.m,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def censor_config(self) -> censor.CensorConfig:
        try:
            return censor.CensorConfig(
                alpha=self.alpha, beta=self.beta,
                cost_hard=self.cost_hard, cost_value=self.cost_value,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key=value lines into a dict; later lines win."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


_INT_KEYS = ("n", "k", "k_c", "m", "trials", "seed")
_FLOAT_KEYS = (
    "sigma_s", "snr_db", "sigma_v", "alpha", "beta",
    "lambda", "cost_hard", "cost_value",
)


def build_config(pairs: dict[str, str]) -> ExperimentConfig:
    """Typed config from string pairs; unknown keys are errors."""
    kwargs: dict = {}
    for key, value in pairs.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs["weight" if key == "lambda" else key] = float(value)
            elif key == "protocols":
                kwargs[key] = tuple(p.strip() for p in value.split(",") if p.strip())
            elif key in ("sweep_param", "epsilon_mode"):
                kwargs[key] = value
            elif key == "sweep_values":
                kwargs[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    required = ("n", "k", "k_c", "sigma_s", "m", "alpha", "beta")
    missing = [key for key in required if key not in kwargs]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _apply_sweep_value(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    param = cfg.sweep_param
    if param == "m":
        if value != int(value) or value < 1:
            raise ConfigError(f"swept m must be a positive integer, got {value!r}")
        return replace(cfg, m=int(value))
    if param == "snr_db":
        return replace(cfg, snr_db=value, sigma_v=None)
    if param == "lambda":
        return replace(cfg, weight=value)
    return replace(cfg, **{param: value})


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one simulated snapshot, all protocols side by side."""

    trial: int
    num_send: int
    num_hard: int
    num_silent: int
    fan: float
    cost: float                   # realized per-node communication cost
    errors: dict[str, float]      # protocol -> squared relative l2 error
    iterations: dict[str, int]
    converged: dict[str, bool]


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    """Simulate one network snapshot and reconstruct with each protocol.

    All protocols see the same realization (scene, patterns, noise), so
    their errors are directly comparable; the uncensored baseline reads
    every node's value while the censored protocols see only the batch.
    """
    params = cfg.model_params()
    thresholds = censor.compute_thresholds(cfg.censor_config(), params)
    scene = model.draw_signal(params, model.substream(cfg.seed, trial_index))
    truth = scene.to_dense()
    vectors = []
    values = np.empty(params.m)
    for i in range(params.m):
        rng = model.substream(cfg.seed, trial_index, i + 1)
        vec = model.draw_sensing_vector(params, rng)
        vectors.append(vec)
        values[i] = model.measure(scene, vec, params.sigma_v, rng)
    decisions = [censor.censor(z, thresholds) for z in values]
    batch = fusion.collect(decisions, vectors)

    def censored_epsilon(include_hard_rows: bool) -> float:
        if cfg.epsilon_mode == "calibrated":
            return fusion.calibrated_epsilon(
                batch, thresholds, params, include_hard_rows=include_hard_rows
            )
        return fusion.epsilon_policy(batch.num_send, params)

    errors: dict[str, float] = {}
    iterations: dict[str, int] = {}
    converged: dict[str, bool] = {}
    for protocol in cfg.protocols:
        if protocol == "cs_l1":
            rows = np.array([vec.to_dense() for vec in vectors])
            opts = recovery.SolverOptions(
                epsilon=fusion.epsilon_policy(params.m, params), weight=cfg.weight
            )
            sol = recovery.solve_l1(values, rows, opts)
        elif protocol == "csc_l1":
            opts = recovery.SolverOptions(
                epsilon=censored_epsilon(include_hard_rows=True), weight=cfg.weight
            )
            sol = recovery.reconstruct_csc_l1(batch, opts)
        else:
            opts = recovery.SolverOptions(
                epsilon=censored_epsilon(include_hard_rows=False), weight=cfg.weight
            )
            sol = recovery.solve_modified_l1(batch, opts)
        errors[protocol] = analysis.squared_relative_error(truth, sol.s_hat)
        iterations[protocol] = sol.iterations
        converged[protocol] = sol.converged
    cost = (cfg.cost_hard * batch.num_hard + cfg.cost_value * batch.num_send) / params.m
    return TrialRecord(
        trial=trial_index,
        num_send=batch.num_send,
        num_hard=batch.num_hard,
        num_silent=batch.num_silent,
        fan=analysis.fan(batch.num_active, params.m),
        cost=cost,
        errors=errors,
        iterations=iterations,
        converged=converged,
    )


_CSV_HEADER = (
    "sweep_param,sweep_value,protocol,nmse_db,nmse_db_lo,nmse_db_hi,"
    "fan_mean,cost_mean,trials,failures,seed"
)


def _db_or_inf(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0.0 else -math.inf


def run_sweep(cfg: ExperimentConfig, progress=None) -> tuple[str, float]:
    """Monte-Carlo sweep; returns (CSV text, worst solver-failure fraction).

    Trials are statistically independent jobs; records are aggregated in
    trial-index order so the CSV is byte-identical however they are
    scheduled.  The confidence band is a normal approximation on the mean
    squared relative error, converted to dB after averaging.
    """
    if cfg.sweep_param is None or not cfg.sweep_values:
        raise ConfigError("sweep requires sweep_param and sweep_values")
    lines = [_CSV_HEADER]
    worst_failure = 0.0
    for value in cfg.sweep_values:
        point_cfg = _apply_sweep_value(cfg, value)
        start = time.time()
        records = [run_trial(point_cfg, t) for t in range(point_cfg.trials)]
        if progress is not None:
            progress(
                f"{cfg.sweep_param}={value:g}: {point_cfg.trials} trials "
                f"in {time.time() - start:.1f}s"
            )
        fan_mean = float(np.mean([r.fan for r in records]))
        cost_mean = float(np.mean([r.cost for r in records]))
        for protocol in cfg.protocols:
            errs = np.array([r.errors[protocol] for r in records])
            failures = sum(not r.converged[protocol] for r in records)
            worst_failure = max(worst_failure, failures / len(records))
            mean = float(errs.mean())
            half = 1.96 * float(errs.std(ddof=1)) / math.sqrt(errs.size) if errs.size > 1 else 0.0
            lines.append(
                ",".join(
                    [
                        cfg.sweep_param,
                        repr(float(value)),
                        protocol,
                        repr(_db_or_inf(mean)),
                        repr(_db_or_inf(mean - half)),
                        repr(_db_or_inf(mean + half)),
                        repr(fan_mean),
                        repr(cost_mean),
                        str(point_cfg.trials),
                        str(failures),
                        str(cfg.seed),
                    ]
                )
            )
    return "\n".join(lines) + "\n", worst_failure


def _fmt_bool(flag: bool) -> str:
    return "true" if flag else "false"


def cmd_thresholds(cfg: ExperimentConfig) -> str:
    """Censoring design report as key=value lines."""
    params = cfg.model_params()
    ccfg = cfg.censor_config()
    th = censor.compute_thresholds(ccfg, params)
    # clamped designs warn on the cost formula; the clamped= line carries that
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cost = censor.expected_cost(ccfg, params)
    lines = [
        f"lower_threshold={th.lower!r}",
        f"upper_threshold={th.upper!r}",
        f"clamped={_fmt_bool(th.clamped)}",
        f"prob_miss={censor.prob_miss(th, params)!r}",
        f"prob_false_alarm={censor.prob_false_alarm(th, params)!r}",
        f"prob_censor={censor.prob_censor(th, params)!r}",
        f"expected_cost={cost!r}",
    ]
    return "\n".join(lines) + "\n"


def cmd_trial(cfg: ExperimentConfig, trial_index: int = 0, dump_batch: str | None = None) -> str:
    """One snapshot end to end, optional batch dump for replay."""
    record = run_trial(cfg, trial_index)
    lines = [
        f"trial={record.trial}",
        f"num_send={record.num_send}",
        f"num_hard={record.num_hard}",
        f"num_silent={record.num_silent}",
        f"fan={record.fan!r}",
        f"cost={record.cost!r}",
    ]
    for protocol in cfg.protocols:
        lines.append(f"{protocol}_sq_rel_error={record.errors[protocol]!r}")
        lines.append(f"{protocol}_iterations={record.iterations[protocol]}")
        lines.append(f"{protocol}_converged={_fmt_bool(record.converged[protocol])}")
    if dump_batch is not None:
        params = cfg.model_params()
        thresholds = censor.compute_thresholds(cfg.censor_config(), params)
        scene = model.draw_signal(params, model.substream(cfg.seed, trial_index))
        vectors, decisions = [], []
        for i in range(params.m):
            rng = model.substream(cfg.seed, trial_index, i + 1)
            vec = model.draw_sensing_vector(params, rng)
            vectors.append(vec)
            decisions.append(
                censor.censor(model.measure(scene, vec, params.sigma_v, rng), thresholds)
            )
        with open(dump_batch, "w") as fh:
            fh.write(fusion.to_text(fusion.collect(decisions, vectors)))
        lines.append(f"batch_dump={dump_batch}")
    return "\n".join(lines) + "\n"


def cmd_oracle_check(cfg: ExperimentConfig, grid_step_factor: float = 3e-5) -> str:
    """Closed-form thresholds against the grid-search oracle."""
    params = cfg.model_params()
    ccfg = cfg.censor_config()
    closed = censor.compute_thresholds(ccfg, params)
    scale = closed.upper if closed.upper > 0.0 else math.sqrt(params.k_c) * params.sigma_v
    step = grid_step_factor * scale
    grid = censor.brute_force_thresholds(ccfg, params, grid_step=step)
    lower_steps = abs(grid.lower - closed.lower) / step
    upper_steps = abs(grid.upper - closed.upper) / step
    miss_diff = abs(censor.prob_miss(grid, params) - censor.prob_miss(closed, params))
    match = lower_steps <= 2.0 and upper_steps <= 2.0 and miss_diff <= 1e-4
    lines = [
        f"closed_lower={closed.lower!r}",
        f"closed_upper={closed.upper!r}",
        f"clamped={_fmt_bool(closed.clamped)}",
        f"grid_step={step!r}",
        f"grid_lower={grid.lower!r}",
        f"grid_upper={grid.upper!r}",
        f"lower_diff_steps={lower_steps!r}",
        f"upper_diff_steps={upper_steps!r}",
        f"prob_miss_closed={censor.prob_miss(closed, params)!r}",
        f"prob_miss_grid={censor.prob_miss(grid, params)!r}",
        f"prob_miss_diff={miss_diff!r}",
        f"match={_fmt_bool(match)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_rip_check(cfg: ExperimentConfig, trial_index: int = 0) -> str:
    """Spectral diagnostics of one snapshot's recovery operator.

    Enumeration-based, so meant for small configurations; the support
    guard raises a ConfigError when the instance is too large.
    """
    params = cfg.model_params()
    thresholds = censor.compute_thresholds(cfg.censor_config(), params)
    scene = model.draw_signal(params, model.substream(cfg.seed, trial_index))
    vectors, decisions = [], []
    for i in range(params.m):
        rng = model.substream(cfg.seed, trial_index, i + 1)
        vec = model.draw_sensing_vector(params, rng)
        vectors.append(vec)
        decisions.append(
            censor.censor(model.measure(scene, vec, params.sigma_v, rng), thresholds)
        )
    batch = fusion.collect(decisions, vectors)
    if batch.num_send == 0:
        raise ConfigError("snapshot produced no sent values; nothing to diagnose")
    operator = fusion.stack_operator(batch, cfg.weight)
    sigma_min = float(np.linalg.svd(operator.matrix, compute_uv=False)[-1])
    pinv = analysis.pseudo_inverse(operator)
    rho = params.k_c / params.n
    lines = [
        f"num_send={batch.num_send}",
        f"num_hard={batch.num_hard}",
        f"num_silent={batch.num_silent}",
        f"sigma_min_stacked={sigma_min!r}",
    ]
    try:
        for norm in ("mean", "isotropic"):
            mat = analysis.rip_input_matrix(batch.sent_rows, pinv, params.k_c, norm)
            report = analysis.rip_constant(mat, cfg.k)
            lines.append(f"delta_k_{norm}={report.delta!r}")
        s_min, s_max = analysis.restricted_extremes(pinv, cfg.k)
        lines.append(f"pinv_restricted_min={s_min!r}")
        lines.append(f"pinv_restricted_max={s_max!r}")
        delta_k = float(
            analysis.rip_constant(
                analysis.rip_input_matrix(batch.sent_rows, pinv, params.k_c, "isotropic"),
                cfg.k,
            ).delta
        )
        floor = 1.0 - rho * s_min**2
        if floor < delta_k < 1.0:
            bound = analysis.sample_count_bound(
                analysis.SampleBoundInputs(
                    delta_k=delta_k, s_min=s_min, s_max=s_max, rho=rho,
                    k=cfg.k, num_hard=batch.num_hard, n=params.n,
                )
            )
            lines.append(f"theta={bound.theta!r}")
            lines.append(f"sample_count_multiplier={bound.multiplier!r}")
        else:
            lines.append(f"theta=unavailable  # delta_k outside ({floor!r}, 1)")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return "\n".join(lines) + "\n"


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    pairs: dict[str, str] = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                pairs.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    return build_config(pairs)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="censorcs",
        description="Censoring-aware compressive sensing experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("thresholds", "censoring design report"),
        ("trial", "one simulated snapshot end to end"),
        ("sweep", "Monte-Carlo sweep over one parameter"),
        ("rip-check", "spectral diagnostics of a snapshot"),
        ("oracle-check", "thresholds against the grid-search oracle"),
    ):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", help="flat key=value config file")
        cmd.add_argument("--seed", type=int, help="override the master seed")
        cmd.add_argument("--out", help="write output here instead of stdout")
        cmd.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
        if name == "trial":
            cmd.add_argument("--trial-index", type=int, default=0)
            cmd.add_argument("--dump-batch", help="write the fusion batch here")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "thresholds":
            _emit(cmd_thresholds(cfg), args.out)
        elif args.command == "trial":
            _emit(cmd_trial(cfg, args.trial_index, args.dump_batch), args.out)
        elif args.command == "sweep":
            csv_text, failure_fraction = run_sweep(
                cfg, progress=lambda msg: print(msg, file=sys.stderr)
            )
            _emit(csv_text, args.out)
            if failure_fraction > MAX_FAILURE_FRACTION:
                print(
                    f"solver failure fraction {failure_fraction:.3f} exceeds "
                    f"{MAX_FAILURE_FRACTION}",
                    file=sys.stderr,
                )
                return 3
        elif args.command == "rip-check":
            _emit(cmd_rip_check(cfg), args.out)
        elif args.command == "oracle-check":
            _emit(cmd_oracle_check(cfg), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0
