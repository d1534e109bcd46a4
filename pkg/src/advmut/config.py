"""Experiment configuration: dataclass bundle plus the key-value file format.

Config files are plain text, one `key = value` per line, `#` comments.
Dotted keys address the nested configs (corpus.n_benign, agent.episodes).
The ADVMUT_UPX environment variable overrides upx_path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agent import AgentConfig
from .corpus import CorpusConfig, SplitPlan
from .gan import GanConfig

# Representative targets for the attack scenarios: two singles, two
# homogeneous ensembles, one stacking over ensemble bases.
REPRESENTATIVE_TARGETS = (
    "decision_tree",
    "knn",
    "random_forest",
    "gradient_boosting",
    "stacking_rf",
)

# The stacking target: five ensemble-family bases with a random-forest meta.
STACKING_RF_BASES = (
    "decision_tree",
    "random_forest",
    "adaboost",
    "bagging",
    "gradient_boosting",
)

# Detector-zoo roster: 5 singles, 4 homogeneous, voting, and two stackings
# (3 best singles -> LR meta; all 5 singles -> LR meta).
ZOO_SINGLES = ("bernoulli", "naive_bayes", "decision_tree", "logistic_regression", "knn")
ZOO_HOMOGENEOUS = ("random_forest", "bagging", "adaboost", "gradient_boosting")
ZOO_STACKING_3_BASES = ("logistic_regression", "knn", "decision_tree")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    out_dir: Path = Path("runs/default")
    upx_path: str | None = None
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    plan: SplitPlan = field(default_factory=SplitPlan)
    gan: GanConfig = field(default_factory=GanConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    targets: tuple[str, ...] = REPRESENTATIVE_TARGETS
    scenario4_samples: int = 100


class ConfigError(ValueError):
    pass


def _coerce(raw: str, kind):
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot read {raw!r} as a boolean")
    return kind(raw)


def parse_kv_file(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def _apply_section(config, prefix: str, kv: dict[str, str]):
    updates = {}
    allowed = {f.name: f.type for f in fields(config)}
    for key, value in kv.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in allowed:
            raise ConfigError(f"unknown key {key!r}")
        current = getattr(config, name)
        if isinstance(current, bool):
            updates[name] = _coerce(value, bool)
        elif isinstance(current, int):
            updates[name] = int(value)
        elif isinstance(current, float):
            updates[name] = float(value)
        else:
            raise ConfigError(f"key {key!r} is not settable from a config file")
    return replace(config, **updates) if updates else config


def load_config(path: Path | None, seed: int | None = None, out_dir: Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional file plus CLI overrides."""
    cfg = ExperimentConfig()
    kv: dict[str, str] = {}
    if path is not None:
        kv = parse_kv_file(path)

    top_updates = {}
    if "seed" in kv:
        top_updates["seed"] = int(kv["seed"])
    if "out_dir" in kv:
        top_updates["out_dir"] = Path(kv["out_dir"])
    if "upx_path" in kv:
        top_updates["upx_path"] = kv["upx_path"] or None
    if "targets" in kv:
        names = tuple(t.strip() for t in kv["targets"].split(",") if t.strip())
        unknown = set(names) - set(REPRESENTATIVE_TARGETS)
        if unknown:
            raise ConfigError(f"unknown targets {sorted(unknown)}")
        top_updates["targets"] = names
    if "scenario4_samples" in kv:
        top_updates["scenario4_samples"] = int(kv["scenario4_samples"])
    if top_updates:
        cfg = replace(cfg, **top_updates)

    cfg = replace(
        cfg,
        corpus=_apply_section(cfg.corpus, "corpus", kv),
        gan=_apply_section(cfg.gan, "gan", kv),
        agent=_apply_section(cfg.agent, "agent", kv),
    )

    # CLI overrides win over the file; the environment wins for upx.
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=Path(out_dir))
    env_upx = os.environ.get("ADVMUT_UPX")
    if env_upx is not None:
        cfg = replace(cfg, upx_path=env_upx or None)

    # Derived seeds: keep the sub-configs tied to the global seed unless
    # the file pinned them explicitly.
    if "corpus.seed" not in kv:
        cfg = replace(cfg, corpus=replace(cfg.corpus, seed=cfg.seed))
    if "gan.seed" not in kv:
        cfg = replace(cfg, gan=replace(cfg.gan, seed=cfg.seed + 1))
    if "agent.seed" not in kv:
        cfg = replace(cfg, agent=replace(cfg.agent, seed=cfg.seed + 2))
    return cfg
