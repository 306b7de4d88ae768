"""Flat ``key = value`` experiment configuration with dotted keys.

Unknown keys, malformed values and unsatisfiable scenario parameters are all
collected and reported together.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from ..errors import ConfigError

EXPERIMENTS = ("dof-region", "sumrate-vs-snr", "optimized-precoders", "hrs-massive",
               "two-cell", "trs-three-cell", "feedback-bits")
RATE_EXPERIMENTS = EXPERIMENTS[1:]
FORMATS = ("csv", "json")
MIN_TRIALS = 100

DEFAULT_TRIALS = {
    "dof-region": 0,
    "sumrate-vs-snr": 2000,
    "optimized-precoders": 100,
    "hrs-massive": 2000,
    "two-cell": 2000,
    "trs-three-cell": 2000,
    "feedback-bits": 500,
}


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); ``None`` defaults mean "experiment specific"
SCENARIO_KEYS = {
    "M": (int, 4),
    "K": (int, 2),
    "snr_db": (_floats, (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)),
    "csit": (str, "rvq"),
    "bits": (int, 10),
    "alpha": (_floats, (0.6,)),
    "common_strategy": (str, "dominant-svd"),
    "rho_tol": (float, 1e-3),
    # optimized precoders
    "objective": (_strs, ("sumrate",)),
    "samples": (int, 50),
    "eval_samples": (int, 1000),
    "max_iter": (int, 500),
    "epsilon": (float, 1e-5),
    "starts": (int, 1),
    "rho_trials": (int, 2000),
    "private_only": (_bool, False),
    # hierarchical RS
    "G": (int, 2),
    "azimuths": (_floats, (-15.0, 15.0)),
    "spread": (float, 10.0),
    "profile": (str, "desk"),
    # feedback bits
    "target_gap": (float, 6.0),
    "max_bits": (int, 30),
    "schemes": (_strs, ("zfbf", "rs")),
}
TOPOLOGY_KEYS = {
    "alpha": (float, 0.5),
    "beta": (float, 1.0),
    "antennas": (int, 0),
    "common_tx": (int, 0),
}
TOP_KEYS = {
    "experiment": (str, None),
    "trials": (int, None),
    "seed": (int, None),
    "workers": (int, 1),
    "output.path": (str, ""),
    "output.format": (str, "csv"),
}

# experiment-specific scenario defaults
PRESETS = {
    "dof-region": {"alpha": (0.0, 0.25, 0.5, 0.6, 0.75, 1.0)},
    "optimized-precoders": {"csit": "exponent", "snr_db": (30.0,)},
    "hrs-massive": {"M": 16, "K": 8, "csit": "exponent", "alpha": (0.3,), "snr_db": (30.0,)},
    "two-cell": {"K": 2, "M": 2, "snr_db": (30.0, 40.0)},
    "trs-three-cell": {"K": 3, "M": 3, "snr_db": (30.0, 40.0)},
    "feedback-bits": {"snr_db": (15.0,), "csit": "rvq"},
}


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    experiment: str
    scenario: dict
    topology: dict
    trials: int
    seed: int
    workers: int = 1
    output_path: str = ""
    output_format: str = "csv"
    explicit: dict = field(default_factory=dict, repr=False)

    def echo(self):
        """Scenario echo written alongside results."""
        out = {"experiment": self.experiment, "trials": self.trials, "seed": self.seed}
        out.update({f"scenario.{k}": v for k, v in sorted(self.scenario.items())})
        if self.experiment in ("two-cell", "trs-three-cell"):
            out.update({f"topology.{k}": v for k, v in sorted(self.topology.items())})
        return out

    def with_overrides(self, seed=None, trials=None, out=None, fmt=None, workers=None):
        cfg = replace(self, scenario=dict(self.scenario), topology=dict(self.topology))
        if seed is not None:
            cfg.seed = int(seed)
        if trials is not None:
            cfg.trials = int(trials)
        if out is not None:
            cfg.output_path = out
        if fmt is not None:
            cfg.output_format = fmt
        if workers is not None:
            cfg.workers = int(workers)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


def _read_pairs(text):
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable config: {exc}"]) from None
    return dict(parser["config"])


def parse_config(text, default_seed=0) -> ExperimentConfig:
    """Parse and validate config text; raises ConfigError listing every problem."""
    pairs = _read_pairs(text)
    problems = []
    top, scenario, topology = {}, {}, {}
    for key, raw in pairs.items():
        if key.startswith("scenario."):
            table, name, dest = SCENARIO_KEYS, key[len("scenario."):], scenario
        elif key.startswith("topology."):
            table, name, dest = TOPOLOGY_KEYS, key[len("topology."):], topology
        else:
            table, name, dest = TOP_KEYS, key, top
        if name not in table:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            dest[name] = table[name][0](raw.strip())
        except ValueError as exc:
            problems.append(f"{key}: cannot parse {raw!r} ({exc})")
    experiment = top.get("experiment")
    if experiment is None:
        problems.append("missing key 'experiment'")
    elif experiment not in EXPERIMENTS:
        problems.append(f"experiment {experiment!r} is not one of {', '.join(EXPERIMENTS)}")
    if experiment not in EXPERIMENTS:
        raise ConfigError(problems)
    explicit = dict(scenario)
    sc = {k: v[1] for k, v in SCENARIO_KEYS.items()}
    sc.update(PRESETS.get(experiment, {}))
    sc.update(scenario)
    tp = {k: v[1] for k, v in TOPOLOGY_KEYS.items()}
    tp.update(topology)
    if tp["antennas"] == 0:
        tp["antennas"] = 3 if experiment == "trs-three-cell" else 2
    cfg = ExperimentConfig(
        experiment=experiment,
        scenario=sc,
        topology=tp,
        trials=top.get("trials", DEFAULT_TRIALS[experiment]),
        seed=top.get("seed", int(default_seed)),
        workers=top.get("workers", 1),
        output_path=top.get("output.path", ""),
        output_format=top.get("output.format", "csv"),
        explicit=explicit,
    )
    # key-level problems and value-level problems are reported together
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, default_seed=0) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path!r}: {exc.strerror}"]) from None
    return parse_config(text, default_seed)


def validate(cfg: ExperimentConfig):
    """Every violated constraint, as human-readable strings."""
    p = []
    sc, tp, exp = cfg.scenario, cfg.topology, cfg.experiment
    if exp in RATE_EXPERIMENTS and cfg.trials < MIN_TRIALS:
        p.append(f"trials must be at least {MIN_TRIALS} for {exp}, got {cfg.trials}")
    if cfg.seed < 0:
        p.append(f"seed must be non-negative, got {cfg.seed}")
    if cfg.workers < 1:
        p.append(f"workers must be at least 1, got {cfg.workers}")
    if cfg.output_format not in FORMATS:
        p.append(f"output.format must be csv or json, got {cfg.output_format!r}")
    snr = sc["snr_db"]
    if not snr:
        p.append("scenario.snr_db must list at least one value")
    elif any(b <= a for a, b in zip(snr, snr[1:])):
        p.append("scenario.snr_db must be strictly increasing")
    if sc["M"] < 1 or sc["K"] < 1:
        p.append("scenario.M and scenario.K must be positive")
    if not sc["alpha"] or any(a < 0 for a in sc["alpha"]):
        p.append("scenario.alpha must list non-negative values")
    if sc["csit"] not in ("rvq", "exponent", "perfect"):
        p.append(f"scenario.csit must be rvq, exponent or perfect, got {sc['csit']!r}")
    if not 1 <= sc["bits"] <= 30:
        p.append(f"scenario.bits must lie in [1, 30], got {sc['bits']}")
    if sc["common_strategy"] not in ("dominant-svd", "matched-sum", "uniform-random"):
        p.append(f"unknown scenario.common_strategy {sc['common_strategy']!r}")
    if not sc["rho_tol"] > 0:
        p.append("scenario.rho_tol must be positive")
    if exp == "sumrate-vs-snr" and sc["csit"] == "exponent" and len(sc["alpha"]) != 1:
        p.append("sumrate-vs-snr with exponent CSIT takes a single scenario.alpha")
    if exp in ("sumrate-vs-snr", "feedback-bits", "optimized-precoders") and sc["K"] > sc["M"]:
        p.append(f"zero-forcing needs K <= M, got K={sc['K']}, M={sc['M']}")
    if exp == "optimized-precoders":
        if sc["csit"] != "exponent":
            p.append("optimized-precoders needs scenario.csit = exponent")
        if len(sc["alpha"]) != 1:
            p.append("optimized-precoders takes a single scenario.alpha")
        bad = set(sc["objective"]) - {"sumrate", "maxmin"}
        if bad or not sc["objective"]:
            p.append(f"scenario.objective must list sumrate and/or maxmin, got {sc['objective']}")
        for key in ("samples", "eval_samples", "max_iter", "starts", "rho_trials"):
            if sc[key] < 1:
                p.append(f"scenario.{key} must be positive")
        if sc["rho_trials"] < MIN_TRIALS:
            p.append(f"scenario.rho_trials must be at least {MIN_TRIALS}")
        if not sc["epsilon"] > 0:
            p.append("scenario.epsilon must be positive")
    if exp == "hrs-massive":
        if sc["profile"] not in ("desk", "full"):
            p.append(f"scenario.profile must be desk or full, got {sc['profile']!r}")
        if sc["G"] < 1 or sc["G"] > sc["K"]:
            p.append(f"scenario.G must lie in [1, K], got {sc['G']}")
        if not sc["azimuths"]:
            p.append("scenario.azimuths must list at least one cluster")
        if not sc["spread"] > 0:
            p.append("scenario.spread must be positive")
        if sc["csit"] != "exponent" or len(sc["alpha"]) != 1:
            p.append("hrs-massive needs scenario.csit = exponent with a single alpha")
        if sc["M"] < 2:
            p.append("hrs-massive needs scenario.M >= 2")
    if exp in ("two-cell", "trs-three-cell"):
        if not 0 <= tp["alpha"] <= 1:
            p.append(f"topology.alpha must lie in [0, 1], got {tp['alpha']}")
        if not 0 <= tp["beta"] <= 1:
            p.append(f"topology.beta must lie in [0, 1], got {tp['beta']}")
        cells = 2 if exp == "two-cell" else 3
        if tp["antennas"] < cells:
            p.append(f"{exp} needs at least {cells} antennas per transmitter")
        if not 0 <= tp["common_tx"] < cells:
            p.append(f"topology.common_tx must lie in [0, {cells - 1}]")
        if exp == "trs-three-cell" and tp["alpha"] > tp["beta"]:
            p.append("topological RS needs topology.alpha <= topology.beta")
    if exp == "feedback-bits":
        if not sc["target_gap"] > 0:
            p.append("scenario.target_gap must be positive")
        if not 1 <= sc["max_bits"] <= 30:
            p.append("scenario.max_bits must lie in [1, 30]")
        bad = set(sc["schemes"]) - {"zfbf", "rs"}
        if bad:
            p.append(f"unknown feedback schemes {sorted(bad)}")
    return p
