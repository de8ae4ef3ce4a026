"""Command-line front end.

Every subcommand accepts the full flag set. Values resolve as
defaults < ``--config`` file (``flag-name = value`` lines) < explicit flags.
Exit codes: 0 ok, 1 usage/config, 2 numerical failure, 3 insufficient data.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, analytic, serialize
from .errors import ConfigError, CvqkdError
from .model import (
    DEFAULT_ETA_BOB,
    DEFAULT_LOSS_DB_PER_KM,
    AttackConfig,
    EveDetector,
    ProtocolParams,
    Strategy,
)
from .montecarlo import HistogramSpec, simulate_session

OUTPUT_DIR_ENV = "CVQKD_SPDA_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


@dataclass(frozen=True)
class RunConfig:
    mu_a: float = 1.0
    x0: float = 0.0
    distance_km: float = 0.0
    loss_db_per_km: float = DEFAULT_LOSS_DB_PER_KM
    eta_bob: float = DEFAULT_ETA_BOB
    attack: str = "none"
    mu_e: float = 3.0
    y0: float = 0.0
    epsilon: float = 1.0
    n: int = 1_000_000
    seed: int = 0
    workers: int = 1
    x0_min: float = 0.0
    x0_max: float = 3.0
    x0_step: float = 0.01
    x_min: float = -4.0
    x_max: float = 4.0
    x_points: int = 801
    mu_e_grid: str = ",".join(format(m, "g") for m in analysis.DEFAULT_MU_E_GRID)
    distances: str = "0,30,50"
    mu_e_curves: str = "1,3,6"
    l_min: float = 0.0
    l_max: float = 100.0
    hist_half_width: float = 4.0
    hist_bins: int = 80
    histogram_output: str = ""
    significance: float = analysis.DEFAULT_SIGNIFICANCE
    basis: str = "correct"
    output: str = ""
    format: str = "csv"

    HELP = {
        "mu_a": "mean photon number of Alice's pulse",
        "x0": "Bob's post-selection threshold",
        "distance_km": "fiber length in km",
        "loss_db_per_km": "fiber attenuation in dB/km",
        "eta_bob": "Bob's optics transmittance times homodyne efficiency",
        "attack": "eavesdropping strategy: none, spda or sma",
        "mu_e": "intensity of Eve's resent pulse at Bob's homodyne input",
        "y0": "dark-count probability of Eve's detectors",
        "epsilon": "efficiency of Eve's detectors",
        "n": "number of pulses to simulate",
        "seed": "random seed",
        "workers": "threads for the Monte Carlo engine (does not change results)",
        "x0_min": "threshold grid start",
        "x0_max": "threshold grid end",
        "x0_step": "threshold grid step",
        "x_min": "quadrature grid start (density)",
        "x_max": "quadrature grid end (density)",
        "x_points": "quadrature grid size (density)",
        "mu_e_grid": "comma-separated mu_e values Eve optimises over",
        "distances": "comma-separated distances (km) of the no-Eve curves (sweep-threshold)",
        "mu_e_curves": "comma-separated mu_e values of the attacked curves (sweep-threshold)",
        "l_min": "distance search lower end (km)",
        "l_max": "distance search upper end (km)",
        "hist_half_width": "histograms cover [-w, w]",
        "hist_bins": "number of histogram bins",
        "histogram_output": "simulate: also write histograms to this file",
        "significance": "goodness-of-fit significance level",
        "basis": "detect: histogram to test, correct or wrong",
        "output": f"output file (relative paths resolve under ${OUTPUT_DIR_ENV}); stdout if empty",
        "format": "output format: csv or json",
    }

    def __post_init__(self):
        if self.attack not in {s.value for s in Strategy}:
            raise ConfigError(f"attack must be none, spda or sma, got {self.attack!r}")
        if self.format not in serialize.FORMATS:
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.basis not in analytic.BASES:
            raise ConfigError(f"basis must be correct or wrong, got {self.basis!r}")
        for name in ("n", "seed", "x_points", "hist_bins"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("mu_e_grid", "distances", "mu_e_curves"):
            _floats(getattr(self, name))

    @classmethod
    def from_mapping(cls, values: dict) -> RunConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for raw_key, raw in values.items():
            key = raw_key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {raw_key!r}")
            kwargs[key] = _coerce(known[key], raw)
        return cls(**kwargs)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("output", "histogram_output"):
            d.pop(k)
        return d

    # domain objects

    def protocol(self) -> ProtocolParams:
        return ProtocolParams(self.mu_a, self.x0, self.distance_km, self.loss_db_per_km, self.eta_bob)

    def detector(self) -> EveDetector:
        return EveDetector(self.y0, self.epsilon)

    def attack_config(self) -> AttackConfig:
        return AttackConfig(Strategy(self.attack), self.mu_e, self.detector())

    def offensive_attack(self) -> AttackConfig:
        """The configured attack, or SPDA when none was chosen."""
        strategy = Strategy.SPDA if self.attack == "none" else Strategy(self.attack)
        return AttackConfig(strategy, self.mu_e, self.detector())

    def histogram_spec(self) -> HistogramSpec:
        return HistogramSpec(self.hist_half_width, self.hist_bins)


def _coerce(f: dataclasses.Field, raw):
    kind = f.type
    try:
        if kind == "int":
            value = int(raw)
        elif kind == "float":
            value = float(raw)
        else:
            value = str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from exc
    return value


def read_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


# --- argument parsing ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


COMMANDS = {
    "analytic": "closed-form conclusive probability and BER for one configuration",
    "simulate": "Monte Carlo session statistics (optionally with histograms)",
    "sweep-threshold": "BER versus threshold for no-Eve and attacked curves",
    "density": "Bob's outcome densities with and without Eve",
    "compare-attacks": "SPDA versus SMA BER versus threshold",
    "crossover": "threshold above which Eve hides below the inherent BER",
    "max-distance": "longest fiber with a BER-detectable threshold",
    "table1": "SPDA and SMA resend probabilities",
    "detect": "simulate a session and test Bob's histogram against the no-Eve density",
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value file; flags override it")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = {"int": int, "float": float}.get(f.type, str)
        extra = {}
        if f.name == "attack":
            extra["choices"] = [s.value for s in Strategy]
        elif f.name == "format":
            extra["choices"] = list(serialize.FORMATS)
        elif f.name == "basis":
            extra["choices"] = list(analytic.BASES)
        common.add_argument(
            flag,
            dest=f.name,
            type=kind,
            default=argparse.SUPPRESS,
            help=f"{RunConfig.HELP[f.name]} (default: {f.default!r})",
            **extra,
        )
    parser = _Parser(prog="cvqkd-spda", description="Phase-coding CV-QKD attack laboratory.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    values = {}
    if "config" in vars(ns):
        values.update({k.replace("-", "_"): v for k, v in read_config_file(ns.config).items()})
    # validate file keys before merging flags
    RunConfig.from_mapping(values)
    values.update(given)
    return RunConfig.from_mapping(values)


def resolve_output(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


# --- commands ------------------------------------------------------------


def _x0_grid(cfg: RunConfig) -> list[float]:
    if not cfg.x0_step > 0 or cfg.x0_max < cfg.x0_min:
        raise ConfigError("need x0_step > 0 and x0_max >= x0_min")
    n = int(math.floor((cfg.x0_max - cfg.x0_min) / cfg.x0_step + 1e-9))
    return [cfg.x0_min + i * cfg.x0_step for i in range(n + 1)]


def _cmd_analytic(cfg):
    params = cfg.protocol()
    if cfg.attack == "none":
        res = analytic.ber_absence(params)
    else:
        mix = analytic.attack_mixture(cfg.attack, cfg.mu_a, cfg.detector())
        res = analytic.ber_presence(mix, cfg.mu_e, cfg.x0)
    return "record", {"conclusive_prob[prob]": res.conclusive_prob, "ber[prob]": res.ber}


def _stats_record(stats):
    return {
        "n_sent[count]": stats.n_sent,
        "n_sifted[count]": stats.n_sifted,
        "n_conclusive[count]": stats.n_conclusive,
        "n_errors[count]": stats.n_errors,
        "ber_estimate[prob]": stats.ber_estimate,
        "ber_stderr[prob]": stats.ber_stderr,
    }


def _cmd_simulate(cfg):
    spec = cfg.histogram_spec() if cfg.histogram_output else None
    result = simulate_session(cfg.protocol(), cfg.attack_config(), cfg.n, cfg.seed, spec, cfg.workers)
    if spec is not None:
        text = serialize.dump_histograms(result.histograms, cfg.echo(), cfg.format)
        _write(text, cfg.histogram_output)
    return "record", _stats_record(result.stats)


def _cmd_sweep(cfg):
    curves = [analysis.AbsenceCurve(l) for l in _floats(cfg.distances)]
    attack = cfg.offensive_attack()
    curves += [analysis.PresenceCurve(m, attack.strategy, attack.detector) for m in _floats(cfg.mu_e_curves)]
    return "table", analysis.sweep_threshold(cfg.protocol(), curves, _x0_grid(cfg))


def _cmd_density(cfg):
    if cfg.x_points < 2 or cfg.x_max <= cfg.x_min:
        raise ConfigError("need x_points >= 2 and x_max > x_min")
    xs = np.linspace(cfg.x_min, cfg.x_max, cfg.x_points)
    return "table", analysis.density_curves(cfg.protocol(), cfg.offensive_attack(), xs)


def _cmd_compare(cfg):
    return "table", analysis.compare_attacks(cfg.mu_a, cfg.mu_e, _x0_grid(cfg))


def _cmd_crossover(cfg):
    params = cfg.protocol()
    attack = cfg.offensive_attack()
    grid = _floats(cfg.mu_e_grid)
    x_range = (cfg.x0_min, cfg.x0_max)
    x0_star = analysis.crossover_threshold(params, attack, grid, x_range)
    if x0_star == x_range[0] or math.isinf(x0_star):
        ber = None
    else:
        ber = analytic.ber_absence(dataclasses.replace(params, x0=x0_star)).ber
    return "record", {
        "x0_star[quadrature]": None if math.isinf(x0_star) else x0_star,
        "attack_wins_everywhere[bool]": x0_star == x_range[0],
        "min_inherent_ber[prob]": ber,
    }


def _cmd_max_distance(cfg):
    d = analysis.max_distance(
        cfg.protocol(), cfg.offensive_attack(), _floats(cfg.mu_e_grid), (cfg.l_min, cfg.l_max), cfg.x0_max
    )
    return "record", {"max_distance[km]": d}


def _cmd_table1(cfg):
    spda = analytic.spda_mixture(cfg.mu_a, cfg.detector())
    sma = analytic.sma_mixture(cfg.mu_a)
    columns = ["attack", "|alpha>[prob]", "|-alpha>[prob]", "|i alpha>[prob]", "|-i alpha>[prob]", "|0>[prob]"]
    rows = [["SPDA", *spda.as_tuple()], ["SMA", *sma.as_tuple()]]
    return "records", (columns, rows)


def _cmd_detect(cfg):
    attack = cfg.attack_config()
    report, result = analysis.detect(
        cfg.protocol(), attack, cfg.n, cfg.seed, cfg.basis, cfg.significance, cfg.histogram_spec(), cfg.workers
    )
    rec = {
        "statistic[chi2]": report.statistic,
        "dof[count]": report.dof,
        "p_value[prob]": report.p_value,
        "decision": report.decision,
    }
    rec.update(_stats_record(result.stats))
    return "record", rec


HANDLERS = {
    "analytic": _cmd_analytic,
    "simulate": _cmd_simulate,
    "sweep-threshold": _cmd_sweep,
    "density": _cmd_density,
    "compare-attacks": _cmd_compare,
    "crossover": _cmd_crossover,
    "max-distance": _cmd_max_distance,
    "table1": _cmd_table1,
    "detect": _cmd_detect,
}


def _write(text: str, path: str) -> None:
    if not path:
        sys.stdout.write(text)
        return
    p = resolve_output(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        fh.write(text)


def _error_line(exc: Exception, code: int) -> str:
    payload = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        payload["diagnostics"] = diagnostics
    return "error: " + json.dumps(payload, default=str, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = resolve_config(ns)
        kind, payload = HANDLERS[ns.command](cfg)
        config = {"command": ns.command, **cfg.echo()}
        if kind == "table":
            text = serialize.dump_table(payload, config, cfg.format)
        elif kind == "record":
            text = serialize.dump_record(payload, config, cfg.format)
        else:
            text = serialize.dump_records(*payload, config, cfg.format)
        _write(text, cfg.output)
    except CvqkdError as exc:
        print(_error_line(exc, exc.exit_code), file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, ValueError) as exc:
        print(_error_line(exc, 2), file=sys.stderr)
        return 2
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
