"""Experiment orchestration: staged pipeline plus the four scenario reports.

Stages write artifacts under the experiment's output directory and later
stages only read them, so every reported number is recomputable from the
cached models/mutants without retraining:

    corpus/    generated files + manifest
    features/  vocabulary, feature matrices, split assignment
    models/    detector-zoo and target-model checkpoints + manifest
    gan/       per-target generator/discriminator/history/adversarial matrix
    agent/     per-target policy checkpoint + episode stats
    attack/    per-target mutants, traces, policy-vs-random summary
    reports/   scenario CSV tables + one JSON bundle
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import corpus as corpus_mod
from . import detectors, features, gan, nn, pe_codec
from .config import (
    STACKING_RF_BASES,
    ZOO_HOMOGENEOUS,
    ZOO_SINGLES,
    ZOO_STACKING_3_BASES,
    ExperimentConfig,
)
from .env import MutationEnv


class MissingArtifact(FileNotFoundError):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# Stage: corpus + features
# ---------------------------------------------------------------------------


def stage_corpus(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out_dir)
    items = corpus_mod.generate_corpus(cfg.corpus)
    corpus_mod.write_corpus_dir(items, out / "corpus", seed=cfg.corpus.seed)

    parsed = [(pe_codec.parse_pe(raw), raw) for raw, _ in items]
    vocab = features.build_vocabulary(parsed)
    gan_bits = np.array(
        [features.extract_gan_features(pe, raw, vocab) for pe, raw in parsed],
        dtype=np.float64,
    )
    state = np.array([features.extract_state_features(raw) for raw, _ in items])
    labels = np.array([label for _, label in items], dtype=np.int64)

    parts = corpus_mod.split(
        list(enumerate(labels)), cfg.plan, seed=cfg.seed + 17
    )
    splits = {name: [int(i) for i, _ in members] for name, members in parts.items()}

    fdir = out / "features"
    fdir.mkdir(parents=True, exist_ok=True)
    vocab.save(fdir / "vocabulary.tsv")
    np.save(fdir / "gan_bits.npy", gan_bits)
    np.save(fdir / "state.npy", state)
    np.save(fdir / "labels.npy", labels)
    (fdir / "splits.json").write_text(json.dumps(splits, sort_keys=True, indent=1))


@dataclass
class LoadedData:
    items: list[tuple[bytes, int]]
    vocab: features.Vocabulary
    gan_bits: np.ndarray
    state: np.ndarray
    labels: np.ndarray
    splits: dict[str, list[int]]

    def gan_dataset(self, *parts: str) -> detectors.Dataset:
        idx = [i for p in parts for i in self.splits[p]]
        return detectors.Dataset(self.gan_bits[idx], self.labels[idx])

    def state_dataset(self, *parts: str) -> detectors.Dataset:
        idx = [i for p in parts for i in self.splits[p]]
        return detectors.Dataset(self.state[idx], self.labels[idx])

    def raw_of(self, part: str) -> list[bytes]:
        return [self.items[i][0] for i in self.splits[part]]


def load_data(cfg: ExperimentConfig) -> LoadedData:
    out = Path(cfg.out_dir)
    fdir = out / "features"
    if not (fdir / "splits.json").exists():
        raise MissingArtifact("run `corpus gen` first")
    items = corpus_mod.read_corpus_dir(out / "corpus")
    return LoadedData(
        items=items,
        vocab=features.Vocabulary.load(fdir / "vocabulary.tsv"),
        gan_bits=np.load(fdir / "gan_bits.npy"),
        state=np.load(fdir / "state.npy"),
        labels=np.load(fdir / "labels.npy"),
        splits=json.loads((fdir / "splits.json").read_text()),
    )


# ---------------------------------------------------------------------------
# Stage: detectors (GAN-space zoo + state-space targets)
# ---------------------------------------------------------------------------


def zoo_roster() -> list[tuple[str, str, dict]]:
    """(name, tag, hyperparams) for the 12-row detector zoo."""
    roster = [(tag, tag, {}) for tag in ZOO_SINGLES]
    roster += [(tag, tag, {}) for tag in ZOO_HOMOGENEOUS]
    roster.append(("voting", "voting", {}))
    roster.append(
        (
            "stacking_3_lr",
            "stacking",
            {"base_tags": list(ZOO_STACKING_3_BASES), "meta_tag": "logistic_regression"},
        )
    )
    roster.append(
        (
            "stacking_5_lr",
            "stacking",
            {"base_tags": list(ZOO_SINGLES), "meta_tag": "logistic_regression"},
        )
    )
    return roster


def target_spec(name: str) -> tuple[str, dict]:
    if name == "stacking_rf":
        return "stacking", {"base_tags": list(STACKING_RF_BASES), "meta_tag": "random_forest"}
    return name, {}


def _train_named(name: str, tag: str, hp: dict, data: detectors.Dataset, seed: int):
    if tag == "stacking":
        return detectors.train_stacking(hp["base_tags"], hp["meta_tag"], data, seed)
    return detectors.train(tag, hp or None, data, seed)


def stage_detectors(cfg: ExperimentConfig) -> None:
    data = load_data(cfg)
    out = Path(cfg.out_dir)

    gan_train = data.gan_dataset("benign_det_train", "malware_det_train")
    gan_test = data.gan_dataset("benign_det_test", "malware_det_test")
    st_train = data.state_dataset("benign_det_train", "malware_det_train")
    st_test = data.state_dataset("benign_det_test", "malware_det_test")

    manifest: dict[str, dict] = {"gan_zoo": {}, "targets": {}}

    zoo_dir = out / "models" / "gan_zoo"
    zoo_dir.mkdir(parents=True, exist_ok=True)
    for i, (name, tag, hp) in enumerate(zoo_roster()):
        det = _train_named(name, tag, hp, gan_train, seed=cfg.seed + 100 + i)
        detectors.save_detector(det, zoo_dir / f"{name}.pkl")
        metrics = detectors.evaluate(det, gan_test)
        manifest["gan_zoo"][name] = {
            "tag": tag,
            "hyperparams": {k: v for k, v in det.hyperparams.items() if isinstance(v, (int, float, str, list))},
            "seed": det.seed,
            "metrics": _metrics_dict(metrics),
        }

    tgt_dir = out / "models" / "targets"
    tgt_dir.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(cfg.targets):
        tag, hp = target_spec(name)
        det = _train_named(name, tag, hp, st_train, seed=cfg.seed + 200 + i)
        detectors.save_detector(det, tgt_dir / f"{name}.pkl")
        metrics = detectors.evaluate(det, st_test)
        manifest["targets"][name] = {
            "tag": tag,
            "hyperparams": {k: v for k, v in det.hyperparams.items() if isinstance(v, (int, float, str, list))},
            "seed": det.seed,
            "metrics": _metrics_dict(metrics),
        }

    (out / "models" / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1)
    )


def _metrics_dict(m: detectors.Metrics) -> dict:
    return {
        "tp": m.tp, "tn": m.tn, "fp": m.fp, "fn": m.fn,
        "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
        "f1": m.f1, "auc": m.auc, "degenerate": m.degenerate,
    }


def _load_model(cfg: ExperimentConfig, group: str, name: str) -> detectors.TrainedDetector:
    path = Path(cfg.out_dir) / "models" / group / f"{name}.pkl"
    if not path.exists():
        raise MissingArtifact(f"missing model {group}/{name}; run `detectors train`")
    return detectors.load_detector(path)


# ---------------------------------------------------------------------------
# Stage: GAN per representative target
# ---------------------------------------------------------------------------


def stage_gan(cfg: ExperimentConfig) -> None:
    data = load_data(cfg)
    out = Path(cfg.out_dir)
    gan_train = data.gan_dataset("benign_det_train", "malware_det_train")
    mal_bits = data.gan_bits[
        [i for i in data.splits["malware_gan_train"]]
    ]
    ben_bits = gan_train.x[gan_train.y == 0]

    for i, name in enumerate(cfg.targets):
        tag, hp = target_spec(name)
        blackbox = _train_named(name, tag, hp, gan_train, seed=cfg.seed + 300 + i)
        gcfg = gan.GanConfig(
            epochs=cfg.gan.epochs,
            batch_size=cfg.gan.batch_size,
            noise_width=cfg.gan.noise_width,
            binarize_threshold=cfg.gan.binarize_threshold,
            seed=cfg.gan.seed + i,
        )
        generator, discriminator, history = gan.train_gan(gcfg, mal_bits, ben_bits, blackbox)
        gdir = out / "gan" / name
        gdir.mkdir(parents=True, exist_ok=True)
        nn.save_net(generator, gdir / "generator.dnet")
        nn.save_net(discriminator, gdir / "discriminator.dnet")
        (gdir / "history.json").write_text(json.dumps(history, sort_keys=True, indent=1))
        detectors.save_detector(blackbox, gdir / "blackbox.pkl")
        adv = gan.adversarial_matrix(generator, mal_bits, gcfg, seed=cfg.seed + 400 + i)
        np.save(gdir / "adversarial.npy", adv)


# ---------------------------------------------------------------------------
# Stage: agent per representative target
# ---------------------------------------------------------------------------


def _make_env(cfg: ExperimentConfig, data: LoadedData, name: str, pool: list[bytes], seed: int) -> MutationEnv:
    target = _load_model(cfg, "targets", name)
    gpath = Path(cfg.out_dir) / "gan" / name / "generator.dnet"
    if not gpath.exists():
        raise MissingArtifact(f"missing generator for {name}; run `feagan train`")
    generator = nn.load_net(gpath)
    return MutationEnv(
        target=target,
        generator=generator,
        vocab=data.vocab,
        pool=pool,
        maxturn=cfg.agent.maxturn,
        seed=seed,
        upx_path=cfg.upx_path,
        noise_width=cfg.gan.noise_width,
    )


def stage_agent(cfg: ExperimentConfig) -> None:
    data = load_data(cfg)
    out = Path(cfg.out_dir)
    train_pool = data.raw_of("malware_gan_train")
    for i, name in enumerate(cfg.targets):
        env = _make_env(cfg, data, name, train_pool, seed=cfg.seed + 500 + i)
        acfg = dc_replace(cfg.agent, seed=cfg.agent.seed + i)
        policy, stats = agent_mod.train_agent(env, acfg)
        adir = out / "agent" / name
        adir.mkdir(parents=True, exist_ok=True)
        policy.save(adir / "policy.dnet", adir / "policy_norm.npz")
        write_csv(
            adir / "stats.csv",
            ["episode", "turns", "success", "return"],
            [[s.episode, s.turns, int(s.success), s.return_] for s in stats],
        )


# ---------------------------------------------------------------------------
# Stage: attack runs (trained policy + uniform-random baseline)
# ---------------------------------------------------------------------------


def stage_attack(cfg: ExperimentConfig) -> None:
    data = load_data(cfg)
    out = Path(cfg.out_dir)
    attack_pool = data.raw_of("malware_attack")
    for i, name in enumerate(cfg.targets):
        ppath = out / "agent" / name / "policy.dnet"
        if not ppath.exists():
            raise MissingArtifact(f"missing policy for {name}; run `agent train`")
        policy = agent_mod.Policy.load(ppath, out / "agent" / name / "policy_norm.npz")

        adir = out / "attack" / name
        (adir / "mutants").mkdir(parents=True, exist_ok=True)

        results = {"policy": [], "random": []}
        for mode, greedy, seed_off in (("policy", True, 600), ("random", False, 700)):
            env = _make_env(cfg, data, name, attack_pool, seed=cfg.seed + seed_off + i)
            rng = np.random.default_rng(cfg.seed + seed_off + 50 + i)
            for j in range(len(attack_pool)):
                run = agent_mod.run_policy(env, policy, j, greedy=greedy, rng=rng)
                if mode == "policy":
                    mutant_name = f"{j:05d}.turn{run['turns']}.bin"
                    (adir / "mutants" / mutant_name).write_bytes(run["mutant"])
                    run["mutant_file"] = f"mutants/{mutant_name}"
                results[mode].append(
                    {k: v for k, v in run.items() if k != "mutant"}
                )

        target = _load_model(cfg, "targets", name)
        er_before = detectors.evasion_rate(
            target, np.stack([features.extract_state_features(b) for b in attack_pool])
        )
        summary = {
            "target": name,
            "n_samples": len(attack_pool),
            "er_before": er_before,
            "er_after": float(np.mean([r["success"] for r in results["policy"]])),
            "random_success": float(np.mean([r["success"] for r in results["random"]])),
            "policy_success": float(np.mean([r["success"] for r in results["policy"]])),
            "mean_turns_policy": float(np.mean([r["turns"] for r in results["policy"]])),
        }
        (adir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
        (adir / "episodes.json").write_text(json.dumps(results, sort_keys=True, indent=1))


# ---------------------------------------------------------------------------
# Scenario reports
# ---------------------------------------------------------------------------

SCENARIO1_HEADER = [
    "space", "name", "tag", "auc", "accuracy", "precision", "recall", "f1",
    "tp", "tn", "fp", "fn",
]


def run_scenario1(cfg: ExperimentConfig) -> list[list]:
    manifest_path = Path(cfg.out_dir) / "models" / "manifest.json"
    if not manifest_path.exists():
        raise MissingArtifact("run `detectors train` first")
    manifest = json.loads(manifest_path.read_text())
    rows = []
    for space, group in (("gan", "gan_zoo"), ("state", "targets")):
        for name in sorted(manifest[group]):
            entry = manifest[group][name]
            m = entry["metrics"]
            rows.append(
                [
                    space, name, entry["tag"], m["auc"], m["accuracy"], m["precision"],
                    m["recall"], m["f1"], m["tp"], m["tn"], m["fp"], m["fn"],
                ]
            )
    return rows


SCENARIO2_HEADER = ["target", "n_samples", "detected", "er_before", "er_after", "delta_er"]


def _attack_summary(cfg: ExperimentConfig, name: str) -> dict:
    path = Path(cfg.out_dir) / "attack" / name / "summary.json"
    if not path.exists():
        raise MissingArtifact(f"missing attack summary for {name}; run `attack run`")
    return json.loads(path.read_text())


def run_scenario2(cfg: ExperimentConfig) -> list[list]:
    rows = []
    for name in cfg.targets:
        s = _attack_summary(cfg, name)
        detected = round(s["n_samples"] * (1.0 - s["er_after"]))
        rows.append(
            [
                name, s["n_samples"], detected, s["er_before"], s["er_after"],
                s["er_after"] - s["er_before"],
            ]
        )
    return rows


def _mutant_bytes(cfg: ExperimentConfig, name: str) -> list[bytes]:
    mdir = Path(cfg.out_dir) / "attack" / name / "mutants"
    if not mdir.exists():
        raise MissingArtifact(f"missing mutants for {name}; run `attack run`")
    return [p.read_bytes() for p in sorted(mdir.iterdir())]


def run_scenario3(cfg: ExperimentConfig) -> list[list]:
    """Transfer matrix: rows are mutant sources ("<name>-M"), columns the
    targets; each cell is the target's evasion rate on those mutants."""
    targets = {name: _load_model(cfg, "targets", name) for name in cfg.targets}
    rows = []
    for source in cfg.targets:
        muts = _mutant_bytes(cfg, source)
        states = np.stack([features.extract_state_features(b) for b in muts])
        row = [f"{source}-M"]
        for name in cfg.targets:
            row.append(detectors.evasion_rate(targets[name], states))
        rows.append(row)
    return rows


SCENARIO4_HEADER = [
    "source", "n_sampled", "format_preserving", "roundtrip_stable",
    "executability", "maliciousness",
]

OUT_OF_SCOPE = "out of scope (no sandbox)"


def run_scenario4(cfg: ExperimentConfig, n: int | None = None) -> list[list]:
    n = n or cfg.scenario4_samples
    rows = []
    rng = np.random.default_rng(cfg.seed + 900)
    for name in cfg.targets:
        muts = _mutant_bytes(cfg, name)
        take = rng.choice(len(muts), size=min(n, len(muts)), replace=False)
        ok_format = 0
        ok_roundtrip = 0
        for j in sorted(take):
            raw = muts[j]
            if pe_codec.verify_format(raw).is_pe:
                ok_format += 1
                if pe_codec.write_pe(pe_codec.parse_pe(raw)) == raw:
                    ok_roundtrip += 1
        rows.append(
            [
                name, len(take), ok_format / len(take), ok_roundtrip / len(take),
                OUT_OF_SCOPE, OUT_OF_SCOPE,
            ]
        )
    return rows


def run_report(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    """Write the CSV tables plus a JSON bundle; returns (bundle, failures)
    where failures lists any violated report-level contract."""
    out = Path(cfg.out_dir) / "reports"
    s1 = run_scenario1(cfg)
    s2 = run_scenario2(cfg)
    s3_header = ["mutant_source"] + list(cfg.targets)
    s3 = run_scenario3(cfg)
    s4 = run_scenario4(cfg)

    write_csv(out / "scenario1_detectors.csv", SCENARIO1_HEADER, s1)
    write_csv(out / "scenario2_targeted.csv", SCENARIO2_HEADER, s2)
    write_csv(out / "scenario3_transfer.csv", s3_header, s3)
    write_csv(out / "scenario4_preservation.csv", SCENARIO4_HEADER, s4)

    bundle = {
        "seed": cfg.seed,
        "targets": list(cfg.targets),
        "scenario1": {"header": SCENARIO1_HEADER, "rows": s1},
        "scenario2": {"header": SCENARIO2_HEADER, "rows": s2},
        "scenario3": {"header": s3_header, "rows": s3},
        "scenario4": {"header": SCENARIO4_HEADER, "rows": s4},
    }
    (out / "report.json").write_text(json.dumps(bundle, sort_keys=True, indent=1))

    failures: list[str] = []
    for row in s4:
        if row[2] != 1.0:
            failures.append(f"scenario4: {row[0]} format preservation {row[2]:.3f} != 1.0")
        if row[3] != 1.0:
            failures.append(f"scenario4: {row[0]} roundtrip stability {row[3]:.3f} != 1.0")
    for row in s2:
        for value in (row[3], row[4]):
            if not 0.0 <= value <= 1.0:
                failures.append(f"scenario2: {row[0]} evasion rate {value} outside [0, 1]")
    for row in s3:
        for value in row[1:]:
            if not 0.0 <= value <= 1.0:
                failures.append(f"scenario3: {row[0]} cell {value} outside [0, 1]")
    return bundle, failures
