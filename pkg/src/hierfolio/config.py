"""INI run configuration: one section per module, every constant with its default.

Date ranges are half-open ``[start, end)`` ISO dates; the test span must start
on or after the end of the training span.
"""
from __future__ import annotations

import configparser
import datetime as _dt
import hashlib
import io
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .agents.env import EnvConfig
from .agents.trainer import TrainConfig
from .allocator import AllocatorConfig
from .backtest import HRL, BacktestConfig
from .baselines import REGISTRY
from .errors import ConfigError, ParseError
from .market_data import daily_log2_rate

DEFAULT_STRATEGIES = ("crp", "ubah", "m0", "up", "eg", "pamr", "cwmr", "corn", "capm", HRL)

# section -> key -> (type, default)
SCHEMA = {
    "run": {"seed": (int, 0), "out": (str, "runs/default"), "strategies": (list, list(DEFAULT_STRATEGIES)),
            "parallel": (bool, False)},
    "data": {"path": (str, None), "schema": (str, ""), "train_start": (str, None), "train_end": (str, None),
             "test_start": (str, None), "test_end": (str, None)},
    "ledger": {"cs": (float, 0.001), "p0": (float, 1_000_000.0), "annual_rate": (float, 0.02),
               "periods_per_year": (int, 252)},
    "clustering": {"cadence": (int, 75), "sortino_window": (int, 75)},
    "allocator": {f.name: (type(f.default), f.default) for f in fields(AllocatorConfig)},
    "agents": {f.name: (type(f.default), f.default) for f in fields(TrainConfig)
               if f.name not in ("env", "allocator")},
    "reward": {"kappa": (float, 10.0), "beta_risk": (float, 0.2), "eta_norm": (float, 252.0)},
    "baselines": {"up_samples": (int, 10_000), "eg_eta": (float, 0.05), "pamr_eps": (float, 0.5),
                  "cwmr_eps": (float, -0.5), "cwmr_confidence": (float, 0.95), "corn_window": (int, 5),
                  "corn_rho": (float, 0.1), "corn_k": (int, 5), "capm_window": (int, 60),
                  "capm_ridge": (float, 1e-6)},
}

POSITIVE = {("ledger", "p0"), ("ledger", "periods_per_year"), ("clustering", "cadence"),
            ("clustering", "sortino_window"), ("allocator", "temperature"), ("allocator", "moment_window"),
            ("agents", "lookback"), ("agents", "hidden"), ("agents", "batch"), ("agents", "replay"),
            ("agents", "lr"), ("agents", "input_scale"), ("agents", "threads"), ("reward", "kappa"),
            ("reward", "eta_norm"), ("baselines", "up_samples"), ("baselines", "corn_window"),
            ("baselines", "corn_k"), ("baselines", "capm_window")}
NON_NEGATIVE = {("ledger", "cs"), ("allocator", "ridge"), ("agents", "upper_steps"), ("agents", "lower_steps"),
                ("agents", "warmup"), ("agents", "episode_len"), ("agents", "sigma_g"), ("agents", "ou_sigma"),
                ("reward", "beta_risk"), ("agents", "beta_ent"), ("agents", "alpha_imit"),
                ("baselines", "capm_ridge")}
UNIT = {("agents", "gamma"), ("agents", "tau"), ("agents", "eps_start"), ("agents", "eps_end"),
        ("allocator", "eta_blend")}


@dataclass
class RunConfig:
    values: dict
    source: str = ""
    base_dir: Path = field(default_factory=Path)

    def get(self, section, key):
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def strategies(self) -> list:
        return list(self.values["run"]["strategies"])

    @property
    def data_path(self) -> Path:
        p = Path(self.values["data"]["path"])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def r_A(self) -> float:
        led = self.values["ledger"]
        return daily_log2_rate(led["annual_rate"], led["periods_per_year"])

    def digest(self) -> str:
        """Hash of every parsed field (independent of formatting and key order)."""
        return hashlib.sha256(json.dumps(self.values, sort_keys=True).encode()).hexdigest()

    def env_config(self) -> EnvConfig:
        led, cl, rw = self.values["ledger"], self.values["clustering"], self.values["reward"]
        return EnvConfig(lookback=self.values["agents"]["lookback"], r_A=self.r_A, cs=led["cs"], p0=led["p0"],
                         cadence=cl["cadence"], sortino_window=cl["sortino_window"], cluster_seed=self.seed,
                         kappa=rw["kappa"], beta_risk=rw["beta_risk"], eta_norm=rw["eta_norm"])

    def allocator_config(self) -> AllocatorConfig:
        return AllocatorConfig(**self.values["allocator"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(env=self.env_config(), allocator=self.allocator_config(), **self.values["agents"])

    def backtest_config(self) -> BacktestConfig:
        led, cl, b = self.values["ledger"], self.values["clustering"], self.values["baselines"]
        params = {
            "up": {"samples": b["up_samples"]},
            "eg": {"eta": b["eg_eta"]},
            "pamr": {"eps": b["pamr_eps"]},
            "cwmr": {"eps": b["cwmr_eps"], "confidence": b["cwmr_confidence"]},
            "corn": {"window": b["corn_window"], "rho": b["corn_rho"], "k": b["corn_k"]},
            "capm": {"window": b["capm_window"], "ridge": b["capm_ridge"], "r_A": self.r_A},
        }
        return BacktestConfig(cs=led["cs"], r_A=self.r_A, p0=led["p0"], cadence=cl["cadence"],
                              sortino_window=cl["sortino_window"], seed=self.seed, strategy_params=params)

    def with_overrides(self, **run) -> "RunConfig":
        vals = json.loads(json.dumps(self.values))
        for k, v in run.items():
            if v is not None:
                vals["run"][k] = v
        diags = _check(vals)
        if diags:
            raise ConfigError("; ".join(diags))
        return RunConfig(vals, self.source, self.base_dir)


def _convert(typ, raw: str):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is list:
        return [s.strip().lower() for s in raw.replace(",", " ").split() if s.strip()]
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def _parse(text: str):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(f"cannot parse config: {exc}") from exc
    values, diags = {}, []
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (typ, default) in keys.items():
            if cp.has_option(sec, key):
                try:
                    values[sec][key] = _convert(typ, cp.get(sec, key))
                except ValueError as exc:
                    diags.append(f"[{sec}] {key}: {exc}")
                    values[sec][key] = default
            elif default is None:
                diags.append(f"[{sec}] {key}: missing required field")
                values[sec][key] = None
            else:
                values[sec][key] = list(default) if isinstance(default, (list, tuple)) else default
    for sec in cp.sections():
        if sec not in SCHEMA:
            diags.append(f"[{sec}]: unknown section")
            continue
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                diags.append(f"[{sec}] {key}: unknown field")
    return values, diags


def _date(s):
    return _dt.date.fromisoformat(s)


def _check(values) -> list:
    diags = []
    for sec, key in sorted(POSITIVE):
        v = values[sec][key]
        if v is not None and not v > 0:
            diags.append(f"[{sec}] {key}: must be > 0, got {v}")
    for sec, key in sorted(NON_NEGATIVE):
        v = values[sec][key]
        if v is not None and v < 0:
            diags.append(f"[{sec}] {key}: must be >= 0, got {v}")
    for sec, key in sorted(UNIT):
        v = values[sec][key]
        if v is not None and not 0.0 <= v <= 1.0:
            diags.append(f"[{sec}] {key}: must lie in [0, 1], got {v}")
    a = values["allocator"]
    if a["clip_low"] > a["clip_high"]:
        diags.append(f"[allocator] clip_low: {a['clip_low']} exceeds clip_high {a['clip_high']}")
    if not a["theta_down"] < 0 < a["theta_up"]:
        diags.append("[allocator] theta_down/theta_up: need theta_down < 0 < theta_up")
    if values["agents"]["activation"] not in ("tanh", "relu"):
        diags.append(f"[agents] activation: unknown {values['agents']['activation']!r} (tanh, relu)")
    known = list(REGISTRY) + [HRL]
    strategies = values["run"]["strategies"]
    if not strategies:
        diags.append("[run] strategies: empty list")
    for s in strategies:
        if s not in known:
            diags.append(f"[run] strategies: unknown strategy {s!r}; known: {', '.join(known)}")
    d = values["data"]
    dates = {}
    for key in ("train_start", "train_end", "test_start", "test_end"):
        if d[key] is None:
            continue
        try:
            dates[key] = _date(d[key])
        except ValueError:
            diags.append(f"[data] {key}: not an ISO date: {d[key]!r}")
    if len(dates) == 4:
        if not dates["train_start"] < dates["train_end"]:
            diags.append("[data] train_end: must be after train_start")
        if not dates["test_start"] < dates["test_end"]:
            diags.append("[data] test_end: must be after test_start")
        if dates["test_start"] < dates["train_end"]:
            diags.append("[data] test_start: test range must follow the training range")
    return diags


def validate_text(text: str) -> list:
    values, diags = _parse(text)
    return diags + _check(values)


def validate(path) -> list:
    """Every invalid or missing field, without running anything. Raises ParseError on unreadable files."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return validate_text(text)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    values, diags = _parse(text)
    diags += _check(values)
    if diags:
        raise ConfigError("; ".join(diags))
    return RunConfig(values, str(path), path.parent)


def default_text(**data) -> str:
    """A complete config with every default spelled out; ``data`` fills the [data] section."""
    cp = configparser.ConfigParser(interpolation=None)
    for sec, keys in SCHEMA.items():
        cp.add_section(sec)
        for key, (typ, default) in keys.items():
            v = data.get(key, default) if sec == "data" else default
            if v is None:
                continue
            if isinstance(v, (list, tuple)):
                v = ", ".join(v)
            cp.set(sec, key, str(v).lower() if isinstance(v, bool) else str(v))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
