"""
Experiment configuration loader.

Reads the experiment YAML (mode, generator and reranker settings, beam sizes,
fold plan, paths) and the slot pattern file used for automatic slot errors.
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, field_validator

from core.config import Mode, RerankConfig, TrainConfig
from core.evaluation import SlotPatternLexicon


class PathsConfig(BaseModel):
    """Input files and output roots; relative paths resolve against the working directory."""
    corpus: str = "data/corpus.jsonl"
    reports_dir: str = "reports"
    rules: str = "config/realization_rules.yaml"
    grammar: str = "config/synthetic_grammar.yaml"
    slot_patterns: str = "config/slot_patterns.yaml"


class ExperimentConfig(BaseModel):
    """Complete experiment configuration."""
    mode: Mode = Mode.STRING
    train: TrainConfig = Field(default_factory=TrainConfig)
    rerank: RerankConfig = Field(default_factory=RerankConfig)
    beam_sizes: List[int] = Field(default_factory=lambda: [1, 5, 10, 100])
    folds: int = 10
    validation_das_per_fold: int = 10
    seed: int = 1
    synthetic_das: int = 202
    bootstrap_iterations: int = 1000
    workers: int = 1
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @field_validator('beam_sizes')
    @classmethod
    def validate_beam_sizes(cls, v):
        if not v:
            raise ValueError('beam_sizes must not be empty')
        if any(b <= 0 for b in v):
            raise ValueError('beam sizes must be positive')
        return sorted(set(v))

    @field_validator('folds')
    @classmethod
    def validate_folds(cls, v):
        if v < 2:
            raise ValueError('folds must be at least 2')
        return v

    @field_validator('validation_das_per_fold', 'bootstrap_iterations', 'synthetic_das', 'workers')
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError('Counts must be positive')
        return v

    def with_overrides(self, seed: Optional[int] = None, mode: Optional[str] = None) -> "ExperimentConfig":
        """Apply the --seed and --mode command line flags."""
        update: Dict = {}
        if seed is not None:
            update["seed"] = seed
            update["train"] = self.train.model_copy(update={"seed": seed})
        if mode is not None:
            update["mode"] = Mode(mode)
        return self.model_copy(update=update) if update else self

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.paths.reports_dir) / f"run-{self.config_hash()}"


def load_config(config_path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate an experiment configuration from a YAML file.

    Raises:
        FileNotFoundError: If the config file doesn't exist
        ValueError: If validation fails
    """
    import yaml

    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Experiment config file not found: {config_path}")
    try:
        with open(config_path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return ExperimentConfig(**data)
    except Exception as e:
        raise ValueError(f"Failed to load experiment config: {str(e)}")


def load_slot_patterns(patterns_path: Union[str, Path]) -> SlotPatternLexicon:
    """
    Load the slot=value surface patterns.

    The file maps each class to a list of lowercase token patterns under a
    top-level "patterns" key.

    Raises:
        FileNotFoundError: If the pattern file doesn't exist
        ValueError: If the file is malformed or a pattern is invalid
    """
    import yaml

    patterns_path = Path(patterns_path)
    if not patterns_path.exists():
        raise FileNotFoundError(f"Slot pattern file not found: {patterns_path}")
    try:
        with open(patterns_path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        patterns = data.get("patterns")
        if not isinstance(patterns, dict):
            raise ValueError("missing 'patterns' mapping")
        return SlotPatternLexicon(patterns)
    except Exception as e:
        raise ValueError(f"Failed to load slot patterns: {str(e)}")
