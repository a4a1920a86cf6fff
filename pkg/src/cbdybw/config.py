"""Experiment configuration: JSON documents mapped onto nested dataclasses.

Keys starting with ``_`` are comments and ignored; any other unknown key is
an error. ``graph``, ``dataset`` and ``strategy`` are required; everything
else has a default (see :func:`default_config_document`).
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class GraphSpec:
    kind: str = "random"  # ring | path | complete | random | explicit
    n: int = 6
    p: float = 0.4
    seed: int | None = None  # defaults to the replication seed
    edges: list[list[int]] | None = None


@dataclass
class DatasetSpec:
    kind: str = "synth"  # synth | idx
    n_examples: int = 600
    dim: int = 10
    n_classes: int = 3
    n_test: int = 200
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None
    project_dim: int | None = None
    seed: int | None = None


@dataclass
class PartitionSpec:
    mode: str = "iid"  # iid | label_skew
    s: int = 2


@dataclass
class StrategySpec:
    kind: str = "dtur"  # full | static_p | dtur
    p: list[int] | None = None


@dataclass
class DelaySpec:
    kind: str = "shifted_exponential"
    rate: float = 1.0
    shift: float = 0.5
    mu: float = 0.0
    sigma: float = 0.5
    means: list[float] | None = None
    jitter: float = 0.0


@dataclass
class ExperimentConfig:
    graph: GraphSpec
    dataset: DatasetSpec
    strategy: StrategySpec
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    delay: DelaySpec = field(default_factory=DelaySpec)
    K: int = 500
    eta0: float = 0.2
    delta: float = 0.95
    lr_mode: str = "geometric"
    batch: int = 32
    consensus_tol: float = 1e-6
    consensus_max_iters: int = 500
    eps_target: float | None = None
    early_stop: bool = False
    straggler_applies_local: bool = True
    b_override: int | None = None
    out_dir: str = "runs"
    seed: int = 0
    replications: int = 1

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]


REQUIRED = ("graph", "dataset", "strategy")


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value: Any, tp: Any, where: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(f"{where}: must not be null")
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if _is_dataclass_type(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return _build(tp, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def _build(cls: type, data: dict, where: str) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key.startswith("_"):
            continue
        path = f"{where}.{key}" if where else key
        if key not in names:
            raise ConfigError(f"unknown key {path!r}")
        kwargs[key] = _coerce(value, hints[key], path)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def _validate(cfg: ExperimentConfig) -> None:
    from .topology import make_graph

    checks = [
        (cfg.graph.kind in ("ring", "path", "complete", "random", "explicit"), "graph.kind", "unknown topology"),
        (cfg.graph.kind == "explicit" or cfg.graph.n >= 2, "graph.n", "need at least 2 workers"),
        (0 < cfg.graph.p <= 1, "graph.p", "must be in (0, 1]"),
        (cfg.dataset.kind in ("synth", "idx"), "dataset.kind", "must be synth or idx"),
        (cfg.dataset.n_test >= 1, "dataset.n_test", "must be positive"),
        (cfg.partition.mode in ("iid", "label_skew"), "partition.mode", "must be iid or label_skew"),
        (cfg.strategy.kind in ("full", "static_p", "dtur"), "strategy.kind", "must be full, static_p or dtur"),
        (cfg.K >= 0, "K", "must be non-negative"),
        (cfg.batch >= 1, "batch", "must be positive"),
        (cfg.eta0 > 0, "eta0", "must be positive"),
        (0 < cfg.delta <= 1, "delta", "must be in (0, 1]"),
        (cfg.lr_mode in ("geometric", "constant"), "lr_mode", "must be geometric or constant"),
        (cfg.consensus_tol > 0, "consensus_tol", "must be positive"),
        (cfg.consensus_max_iters >= 0, "consensus_max_iters", "must be non-negative"),
        (cfg.replications >= 1, "replications", "must be at least 1"),
        (cfg.b_override is None or cfg.b_override >= 1, "b_override", "must be positive"),
    ]
    for ok, path, msg in checks:
        if not ok:
            raise ConfigError(f"{path}: {msg}")
    if cfg.graph.kind == "explicit":
        if not cfg.graph.edges:
            raise ConfigError("graph.edges: required for explicit graphs")
        try:
            make_graph(cfg.graph.n, cfg.graph.edges)
        except ValueError as exc:
            raise ConfigError(f"graph: {exc}") from None
    if cfg.dataset.kind == "idx" and not (cfg.dataset.images and cfg.dataset.labels):
        raise ConfigError("dataset: idx datasets need images and labels paths")
    try:
        from .straggler import DelayModel

        DelayModel(**_delay_kwargs(cfg.delay))
    except ValueError as exc:
        raise ConfigError(f"delay: {exc}") from None


def _delay_kwargs(spec: DelaySpec) -> dict:
    kw = dataclasses.asdict(spec)
    kw["means"] = tuple(kw["means"] or ())
    return kw


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = dict(doc)
    if isinstance(doc.get("strategy"), str):
        doc["strategy"] = {"kind": doc["strategy"]}
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
    cfg = _build(ExperimentConfig, doc, "")
    _validate(cfg)
    return cfg


def parse_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load, override and validate a JSON config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    for item in overrides or []:
        apply_override(doc, item)
    return config_from_dict(doc)


def apply_override(doc: dict, item: str) -> None:
    """Apply ``dotted.key=value`` in place; value parsed as JSON, else kept as a string.

    A scalar assigned to a section (``strategy=full``) sets that section's ``kind``.
    """
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
    last = parts[-1]
    if isinstance(node.get(last), dict) and not isinstance(value, dict):
        node[last]["kind"] = value
    elif len(parts) == 1 and last in ("graph", "dataset", "partition", "delay") and not isinstance(value, dict):
        node[last] = {"kind" if last != "partition" else "mode": value}
    else:
        node[last] = value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def default_config_document() -> dict:
    """A complete default config with ``_comment`` annotations."""
    cfg = ExperimentConfig(GraphSpec(), DatasetSpec(), StrategySpec())
    doc = config_to_dict(cfg)
    doc = {"_comment": "cb-DyBW experiment config; keys starting with _ are ignored", **doc}
    doc["graph"]["_comment"] = "kind: ring|path|complete|random|explicit; seed null -> run seed"
    doc["dataset"]["_comment"] = "kind: synth|idx; idx needs images/labels paths (.gz ok)"
    doc["partition"]["_comment"] = "mode: iid|label_skew (s classes per worker)"
    doc["strategy"]["_comment"] = "kind: full|static_p|dtur; p: per-worker wait counts for static_p"
    doc["delay"]["_comment"] = "kind: exponential|shifted_exponential|lognormal|fixed_heterogeneous"
    return doc
