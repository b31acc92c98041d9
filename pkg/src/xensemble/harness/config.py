"""Experiment configuration: one versioned JSON document, strict keys.

Nested sections map onto frozen dataclasses. Unknown keys anywhere raise
:class:`ConfigError` so a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..attacks import AttackConfig
from ..defense import RULES
from ..denoise import DenoiserParseError, parse_denoiser_list

CONFIG_VERSION = 1
THREAT_MODES = ("black-box", "grey-fix", "grey-rand", "white-fix", "white-rand")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Missing or malformed pipeline artifact (CLI exit code 3)."""


def derive_seed(base: int, *tags) -> int:
    """Stable 63-bit seed for a named sub-task of a run seeded with ``base``."""
    words = [int(base) & 0xFFFFFFFF, (int(base) >> 32) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            words.extend(tag.encode("utf-8"))
        else:
            words.append(int(tag) & 0xFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class DataSpec:
    num_classes: int = 10
    side: int = 16
    noise_sigma: float = 0.1
    train_per_class: int = 150
    test_per_class: int = 20
    kappa_per_class: int = 10
    ood_count: int = 200


@dataclass(frozen=True)
class ModelSpec:
    id: str
    hidden: tuple = (64,)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.id or any(ch in self.id for ch in "/\\:, "):
            raise ConfigError(f"bad model id {self.id!r}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"model {self.id}: hidden widths must be positive")


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9


@dataclass(frozen=True)
class PoolSpec:
    target: ModelSpec = ModelSpec("TM", (64,), 0)
    verifiers: tuple = (
        ModelSpec("VM1", (32,), 1),
        ModelSpec("VM2", (96,), 2),
        ModelSpec("VM3", (48, 32), 3),
        ModelSpec("VM4", (128,), 4),
        ModelSpec("VM5", (64, 64), 5),
    )
    init_scale: float = 4.0
    train: TrainSpec = TrainSpec()
    accuracy_band: float = 0.05

    @property
    def ids(self) -> list[str]:
        return [self.target.id] + [v.id for v in self.verifiers]

    @property
    def specs(self) -> list[ModelSpec]:
        return [self.target, *self.verifiers]


@dataclass(frozen=True)
class AttackEntry:
    label: str
    config: AttackConfig


def _default_attacks() -> tuple:
    return (
        AttackEntry("fgsm-0.1", AttackConfig("fgsm", epsilon=0.1)),
        AttackEntry("fgsm-0.3", AttackConfig("fgsm", epsilon=0.3)),
        AttackEntry("bim", AttackConfig("bim", epsilon=0.1, step=0.01, max_iters=20)),
        AttackEntry("pgd", AttackConfig("pgd", epsilon=0.1, step=0.01, max_iters=20, restarts=2)),
        AttackEntry("cw2-most", AttackConfig("cw2", "most", max_iters=1000)),
        AttackEntry("cw2-ll", AttackConfig("cw2", "least-likely", max_iters=1000)),
        AttackEntry("cw2-most-k20", AttackConfig("cw2", "most", max_iters=1000, confidence=20.0, c=3.0)),
        AttackEntry("jsma-most", AttackConfig("jsma", "most")),
        AttackEntry("jsma-ll", AttackConfig("jsma", "least-likely")),
    )


@dataclass(frozen=True)
class AttackStage:
    count: int = 100
    attacks: tuple = field(default_factory=_default_attacks)
    fgsm_sweep: tuple = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)


@dataclass(frozen=True)
class KappaSpec:
    source: str = "negative"   # or "benign"
    epsilon: float = 0.1       # FGSM budget for the held-out negatives
    noise_sigma: float = 0.3   # Gaussian corruption for the noisy half


@dataclass(frozen=True)
class DefenseSpec:
    team_sizes: Optional[tuple] = (5,)
    kappa_threshold: float = 1.0
    top_m: int = 3
    consensus_rule: str = "plurality"
    confidence_level: float = 0.5
    # the target model is the one every attack controls; its vote is excluded by default
    include_target_vote: bool = False
    # no attacker controls anything during OOD screening, so the target votes there
    ood_target_vote: bool = True


@dataclass(frozen=True)
class ThreatSpec:
    modes: tuple = THREAT_MODES
    grey_exposed: tuple = ("TM", "VM1")
    team_size: int = 3
    include_target_vote: bool = False
    # None: fixed modes average over every team that holds the exposed models
    fixed_team: Optional[tuple] = None
    count: int = 100
    attack: AttackConfig = AttackConfig("cw2", "most", max_iters=1000, confidence=20.0, c=3.0)


@dataclass(frozen=True)
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    out_dir: str = "runs/desk"
    timing: str = "none"
    data: DataSpec = DataSpec()
    pool: PoolSpec = PoolSpec()
    attack: AttackStage = AttackStage()
    kappa: KappaSpec = KappaSpec()
    denoisers: tuple = ("rotation_15", "rotation_-15", "rotation_8", "rotation_-8", "medFilter-2*2", "quan-4-bit")
    defense: DefenseSpec = DefenseSpec()
    threat: ThreatSpec = ThreatSpec()

    def __post_init__(self):
        validate(self)

    @property
    def denoiser_specs(self) -> tuple:
        return tuple(parse_denoiser_list(list(self.denoisers), side=self.data.side)) if self.denoisers else ()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# --- validation --------------------------------------------------------------

def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: ExperimentConfig) -> None:
    _check(cfg.version == CONFIG_VERSION, f"unsupported config version {cfg.version}")
    _check(cfg.timing in ("none", "wall"), "timing must be 'none' or 'wall'")
    d = cfg.data
    _check(2 <= d.num_classes <= 16, "num_classes must lie in [2, 16]")
    _check(d.side >= 4, "side must be >= 4")
    _check(d.noise_sigma >= 0, "noise_sigma must be >= 0")
    _check(min(d.train_per_class, d.test_per_class, d.kappa_per_class, d.ood_count) >= 1,
           "dataset sizes must be >= 1")

    ids = cfg.pool.ids
    _check(len(set(ids)) == len(ids), "model ids must be unique")
    _check(len(cfg.pool.verifiers) >= 2, "the pool needs at least 2 verifiers")
    _check(cfg.pool.init_scale > 0, "init_scale must be > 0")
    t = cfg.pool.train
    _check(t.epochs >= 1 and t.batch_size >= 1 and t.learning_rate > 0 and 0 <= t.momentum < 1,
           "invalid training hyper-parameters")
    _check(0 <= cfg.pool.accuracy_band <= 1, "accuracy_band must lie in [0, 1]")

    _check(cfg.attack.count >= 0, "attack count must be >= 0")
    labels = [a.label for a in cfg.attack.attacks]
    _check(len(set(labels)) == len(labels), "attack labels must be unique")
    _check(all(lbl and "/" not in lbl for lbl in labels), "attack labels must be non-empty file-safe names")
    _check(all(e >= 0 for e in cfg.attack.fgsm_sweep), "sweep budgets must be >= 0")

    _check(cfg.kappa.source in ("negative", "benign"), "kappa.source must be 'negative' or 'benign'")
    try:
        cfg.denoiser_specs
    except DenoiserParseError as exc:
        raise ConfigError(f"denoisers: {exc}") from None

    df = cfg.defense
    n_ver = len(cfg.pool.verifiers)
    if df.team_sizes is not None:
        _check(len(df.team_sizes) > 0 and all(3 <= s <= n_ver + 1 for s in df.team_sizes),
               f"team sizes must lie in [3, {n_ver + 1}]")
    _check(df.consensus_rule in RULES, f"unknown consensus rule {df.consensus_rule!r}")
    _check(0 <= df.confidence_level <= 1, "confidence_level must lie in [0, 1]")
    _check(df.top_m >= 1, "top_m must be >= 1")

    th = cfg.threat
    _check(all(m in THREAT_MODES for m in th.modes), f"threat modes must come from {THREAT_MODES}")
    _check(3 <= th.team_size <= n_ver + 1, f"threat team_size must lie in [3, {n_ver + 1}]")
    _check(th.count >= 0, "threat count must be >= 0")
    unknown = [m for m in th.grey_exposed if m not in ids]
    _check(not unknown, f"exposed ids not in the pool: {unknown}")
    _check(cfg.pool.target.id in th.grey_exposed, "grey exposure must include the target model")
    _check(len(set(th.grey_exposed)) < len(ids), "grey exposure must be a strict subset of the pool")
    if th.fixed_team is not None:
        _check(len(set(th.fixed_team)) == th.team_size and all(m in ids for m in th.fixed_team),
               "fixed_team must list team_size distinct pool ids")
        _check(cfg.pool.target.id in th.fixed_team, "fixed_team must contain the target model")
        _check(set(th.grey_exposed) <= set(th.fixed_team), "grey exposure must lie inside fixed_team")


# --- JSON ----------------------------------------------------------------------

_NESTED = {
    "data": DataSpec, "pool": PoolSpec, "attack": AttackStage, "kappa": KappaSpec,
    "defense": DefenseSpec, "threat": ThreatSpec,
}


def _strict_fields(cls, obj: dict, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(obj) - names)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    return dict(obj)


def _tuple(v, where: str):
    if v is None:
        return None
    if not isinstance(v, list):
        raise ConfigError(f"{where}: expected a list")
    return tuple(v)


def _attack_config(obj: dict, where: str) -> AttackConfig:
    fields = _strict_fields(AttackConfig, obj, where)
    try:
        return AttackConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _attack_entry(obj: dict, where: str) -> AttackEntry:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    body = dict(obj)
    label = body.pop("label", None)
    cfg = _attack_config(body, where)
    return AttackEntry(label or _auto_label(cfg), cfg)


def _auto_label(cfg: AttackConfig) -> str:
    if cfg.kind in ("fgsm", "bim", "pgd"):
        return f"{cfg.name}-{cfg.epsilon:g}"
    return cfg.name


def _model_spec(obj: dict, where: str) -> ModelSpec:
    fields = _strict_fields(ModelSpec, obj, where)
    if "hidden" in fields:
        fields["hidden"] = _tuple(fields["hidden"], f"{where}.hidden")
    try:
        return ModelSpec(**fields)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build(cls, obj: dict, where: str):
    fields = _strict_fields(cls, obj, where)
    if cls is PoolSpec:
        if "target" in fields:
            fields["target"] = _model_spec(fields["target"], f"{where}.target")
        if "verifiers" in fields:
            vs = _tuple(fields["verifiers"], f"{where}.verifiers")
            fields["verifiers"] = tuple(_model_spec(v, f"{where}.verifiers[{i}]") for i, v in enumerate(vs))
        if "train" in fields:
            fields["train"] = _build(TrainSpec, fields["train"], f"{where}.train")
    elif cls is AttackStage:
        if "attacks" in fields:
            items = _tuple(fields["attacks"], f"{where}.attacks")
            fields["attacks"] = tuple(_attack_entry(a, f"{where}.attacks[{i}]") for i, a in enumerate(items))
        if "fgsm_sweep" in fields:
            fields["fgsm_sweep"] = tuple(float(v) for v in _tuple(fields["fgsm_sweep"], f"{where}.fgsm_sweep"))
    elif cls is DefenseSpec:
        if "team_sizes" in fields:
            fields["team_sizes"] = _tuple(fields["team_sizes"], f"{where}.team_sizes")
    elif cls is ThreatSpec:
        for key in ("modes", "grey_exposed", "fixed_team"):
            if key in fields:
                fields[key] = _tuple(fields[key], f"{where}.{key}")
        if "attack" in fields:
            fields["attack"] = _attack_config(fields["attack"], f"{where}.attack")
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(obj: Any) -> ExperimentConfig:
    top = _strict_fields(ExperimentConfig, obj, "config")
    if "version" not in top:
        raise ConfigError("config: missing 'version'")
    for key, cls in _NESTED.items():
        if key in top:
            top[key] = _build(cls, top[key], key)
    if "denoisers" in top:
        top["denoisers"] = _tuple(top["denoisers"], "denoisers")
    try:
        return ExperimentConfig(**top)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None


def _plain(value):
    if isinstance(value, AttackConfig):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, AttackEntry):
        return {"label": value.label, **_plain(value.config)}
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(obj)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
