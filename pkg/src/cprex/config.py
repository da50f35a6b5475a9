"""Experiment configuration: desk and paper profiles plus TOML overrides.

The desk profile shrinks model dimensions and tree counts so the full pipeline
runs on a laptop; the paper profile carries the published hyperparameters
(word dim 300, auxiliary dims 32, LSTM hidden 2048, 50,000 trees).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cnn import CnnConfig
from .labels import DEFAULT_POSITIVE_LABELS, LabelSet
from .rnn import RnnConfig


@dataclass
class CorpusConfig:
    positive_labels: tuple[str, ...] = DEFAULT_POSITIVE_LABELS
    keyword_lexicon: str | None = None  # path; None means the shipped default

    def label_set(self) -> LabelSet:
        return LabelSet(tuple(self.positive_labels))


@dataclass
class SvmConfig:
    c: float = 1.0
    tol: float = 1e-3
    balanced: bool = True
    max_epochs: int = 1000


@dataclass
class EnsembleConfig:
    tree_count: int = 500
    vote_unanimous: bool = False
    bootstrap: bool = True


@dataclass
class PipelineConfig:
    test_fraction: float = 0.2
    dev_fraction: float = 0.1


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    rnn: RnnConfig = field(default_factory=RnnConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)


def desk_profile() -> ExperimentConfig:
    return ExperimentConfig(
        cnn=CnnConfig(word_dim=50, pos_dim=16, chunk_dim=16, ne_dim=16, dep_dim=16,
                      position_dim=16, filters_per_window=16, epochs=30),
        rnn=RnnConfig(word_dim=50, pos_dim=16, chunk_dim=16, position_dim=16,
                      hidden=64, epochs=35),
        ensemble=EnsembleConfig(tree_count=500),
    )


def paper_profile() -> ExperimentConfig:
    return ExperimentConfig(
        cnn=CnnConfig(epochs=50),
        rnn=RnnConfig(epochs=30),
        ensemble=EnsembleConfig(tree_count=50000),
    )


PROFILES = {"desk": desk_profile, "paper": paper_profile}


def _apply_section(obj, section: dict, name: str):
    known = {f.name: f for f in fields(obj)}
    for key, value in section.items():
        if key not in known:
            raise KeyError("unknown config key %s.%s" % (name, key))
        if isinstance(value, list):
            value = tuple(value)
        setattr(obj, key, value)


def load_config(path=None, profile: str = "desk") -> ExperimentConfig:
    """Profile defaults, optionally overridden section by section from a TOML
    file with tables corpus/svm/cnn/rnn/ensemble/pipeline."""
    if profile not in PROFILES:
        raise KeyError("unknown profile %r (expected one of %s)"
                       % (profile, ", ".join(sorted(PROFILES))))
    config = PROFILES[profile]()
    if path is None:
        return config
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    for name in ("corpus", "svm", "cnn", "rnn", "ensemble", "pipeline"):
        if name in data:
            _apply_section(getattr(config, name), data[name], name)
    return config
