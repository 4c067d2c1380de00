"""Experiment configuration files: strict parsing and content hashing.

One JSON file drives the whole chain. Unknown keys are rejected so typos
fail loudly, and the sha256 of the canonical form is embedded in every
artifact to tie stages together.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .journey import (ConfigError, GeneratorConfig, generator_config_from_dict,
                      generator_config_to_dict)
from .train import TrainConfig


@dataclass
class PipelineSection:
    split_t1_days: float
    split_t2_days: float
    n_bins: int = 10
    max_enc_len: int = 256

    def __post_init__(self):
        if self.split_t1_days >= self.split_t2_days:
            raise ConfigError("split_t1_days must be < split_t2_days")


@dataclass
class ModelSection:
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_dim: int = 128
    dropout_rate: float = 0.1
    delta_transform: str = "log1p"
    time_unit_seconds: float = 86400.0
    bias_after_scale: bool = False


@dataclass
class EvalSection:
    seeds: list[int] = field(default_factory=lambda: [101, 102, 103, 104, 105])
    ks: list[int] = field(default_factory=lambda: [1, 5, 10])


@dataclass
class ExperimentConfig:
    seed: int
    generator: GeneratorConfig
    pipeline: PipelineSection
    model: ModelSection
    train: TrainConfig
    eval: EvalSection


def _section(d: dict, name: str) -> dict:
    if name not in d:
        raise ConfigError(f"missing required key {name!r}")
    if not isinstance(d[name], dict):
        raise ConfigError(f"section {name!r} must be an object")
    return d[name]


def _parse_section(cls, data: dict, where: str, required=()):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    for key in required:
        if key not in data:
            raise ConfigError(f"missing required key {key!r} in {where}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    allowed = {"seed", "generator", "pipeline", "model", "train", "eval"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    if "seed" not in d:
        raise ConfigError("missing required key 'seed'")
    generator = generator_config_from_dict(_section(d, "generator"))
    pipeline = _parse_section(PipelineSection, _section(d, "pipeline"), "pipeline",
                              required=("split_t1_days", "split_t2_days"))
    model = _parse_section(ModelSection, d.get("model", {}), "model")
    train = _parse_section(TrainConfig, d.get("train", {}), "train")
    evals = _parse_section(EvalSection, d.get("eval", {}), "eval")
    return ExperimentConfig(seed=int(d["seed"]), generator=generator,
                            pipeline=pipeline, model=model, train=train,
                            eval=evals)


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "seed": cfg.seed,
        "generator": generator_config_to_dict(cfg.generator),
        "pipeline": asdict(cfg.pipeline),
        "model": asdict(cfg.model),
        "train": asdict(cfg.train),
        "eval": asdict(cfg.eval),
    }


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(experiment_config_to_dict(cfg), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    cfg = experiment_config_from_dict(data)
    if seed_override is not None:
        cfg.seed = int(seed_override)
    return cfg


def model_overrides(cfg: ExperimentConfig) -> dict:
    """ModelConfig keyword overrides from the model section."""
    from .attention import TimeAliBiConfig, default_slopes
    m = cfg.model
    alibi = TimeAliBiConfig(n_heads=m.n_heads, slopes=default_slopes(m.n_heads),
                            delta_transform=m.delta_transform,
                            time_unit_seconds=m.time_unit_seconds,
                            bias_after_scale=m.bias_after_scale)
    return dict(d_model=m.d_model, n_heads=m.n_heads,
                n_encoder_layers=m.n_encoder_layers,
                n_decoder_layers=m.n_decoder_layers, ffn_dim=m.ffn_dim,
                dropout_rate=m.dropout_rate, alibi=alibi)


def split_times(cfg: ExperimentConfig) -> tuple[int, int]:
    return (int(cfg.pipeline.split_t1_days * 86400),
            int(cfg.pipeline.split_t2_days * 86400))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_stage_manifest(stage_dir, stage: str, cfg_hash: str,
                         inputs: dict[str, str], output_files) -> None:
    stage_dir = Path(stage_dir)
    outputs = {name: file_sha256(stage_dir / name) for name in sorted(output_files)}
    manifest = {"stage": stage, "config_hash": cfg_hash, "inputs": inputs,
                "outputs": outputs}
    with open(stage_dir / "stage.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


class LineageError(RuntimeError):
    pass


def verify_stage(stage_dir, stage: str, cfg_hash: str) -> dict[str, str]:
    """Check an upstream stage's manifest and file integrity.

    Returns {filename: hash} of the stage outputs for downstream lineage.
    """
    stage_dir = Path(stage_dir)
    manifest_path = stage_dir / "stage.json"
    if not manifest_path.exists():
        raise LineageError(f"missing upstream artifact manifest {manifest_path}; "
                           f"run the {stage} stage first")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("config_hash") != cfg_hash:
        raise LineageError(
            f"config hash mismatch for stage {stage!r}: artifacts were built "
            f"with {manifest.get('config_hash')} but the current config hashes "
            f"to {cfg_hash}")
    for name, expected in manifest["outputs"].items():
        actual = file_sha256(stage_dir / name)
        if actual != expected:
            raise LineageError(
                f"artifact {name!r} of stage {stage!r} was modified: manifest "
                f"hash {expected}, file hash {actual}")
    return manifest["outputs"]
