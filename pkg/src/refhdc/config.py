"""File-backed run configuration.

A run is described by one JSON document.  Unknown keys are rejected; the
usual symbols are accepted as aliases (``N``, ``D``, ``M``, ``D0``, ``G``,
``G_T``, ``L``).  Defaults that depend on the dataset (normalization and
RFFM length-scale) are resolved here so the effective config written next
to the results is complete.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .features import NORMALIZATION_MODES
from .fedsim import FederationConfig

METHODS = ("baseline", "refhdc")
IMAGE_DATASETS = ("mnist", "fashion_mnist", "cifar10")

# public train-set sizes, used by cost estimates that run without data
KNOWN_SHAPES = {
    "mnist": {"train_size": 60000, "num_classes": 10, "input_dim": 784},
    "fashion_mnist": {"train_size": 60000, "num_classes": 10, "input_dim": 784},
    "cifar10": {"train_size": 50000, "num_classes": 10, "input_dim": 3072},
    "uci_har": {"train_size": 7352, "num_classes": 6, "input_dim": 561},
}

ALIASES = {
    "N": "num_clients",
    "D": "dim",
    "M": "num_submodels",
    "D0": "refine_positions",
    "G": "global_epochs",
    "G_T": "training_epochs",
    "L": "local_epochs",
    "seed": "master_seed",
}

_FED_FIELDS = {f.name for f in fields(FederationConfig)}


@dataclass
class RffmSettings:
    enabled: bool = True
    features: int = 3200
    sigma: Optional[float] = None


@dataclass
class RunConfig:
    federation: FederationConfig
    method: str = "refhdc"
    manifest: Optional[str] = None
    normalization: Optional[str] = None
    rffm: RffmSettings = field(default_factory=RffmSettings)
    train_limit: Optional[int] = None
    output_dir: Optional[str] = None
    name: Optional[str] = None
    train_size: Optional[int] = None
    num_classes: Optional[int] = None
    input_dim: Optional[int] = None

    @property
    def dataset(self) -> str:
        return self.federation.dataset

    @property
    def effective_federation(self) -> FederationConfig:
        fed = self.federation
        return fed.as_baseline() if self.method == "baseline" else fed

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "method": self.method,
            "dataset": self.dataset,
            "manifest": self.manifest,
            "train_limit": self.train_limit,
            "normalization": self.normalization,
            "rffm": asdict(self.rffm),
            "output_dir": self.output_dir,
        }
        out.update(self.effective_federation.resolved())
        return out


def default_normalization(dataset: str) -> str:
    return "unit-norm" if dataset in IMAGE_DATASETS else "none"


def default_sigma(dataset: str) -> float:
    return 2.5 if dataset == "uci_har" else 1.0


def _int(problems, doc, key, minimum=None, optional=False):
    value = doc.get(key)
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        problems[key] = f"expected an integer, got {value!r}"
        return None
    if minimum is not None and value < minimum:
        problems[key] = f"must be >= {minimum}, got {value}"
        return None
    return value


def parse_config(doc: dict, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a config mapping; raises :class:`ConfigError` listing every bad field."""
    if not isinstance(doc, dict):
        raise ConfigError({"<root>": "config must be a JSON object"})
    doc = {ALIASES.get(k, k): v for k, v in doc.items()}
    problems = {}
    known = _FED_FIELDS | {
        "method", "manifest", "normalization", "rffm", "train_limit", "output_dir",
        "name", "train_size", "num_classes", "input_dim",
    }
    for key in sorted(set(doc) - known):
        problems[key] = "unknown field"

    method = doc.get("method", "refhdc")
    if method not in METHODS:
        problems["method"] = f"must be one of {METHODS}"
    dataset = doc.get("dataset")
    if not isinstance(dataset, str) or not dataset:
        problems["dataset"] = "a dataset name is required"
        dataset = ""

    fed_kwargs = {}
    int_fields = {
        "num_clients": 1, "dim": 1, "num_submodels": 1, "global_epochs": 0, "local_epochs": 1,
        "classes_per_client": 1, "traffic_bytes_per_element": 1, "storage_bytes_per_element": 1,
    }
    for key, minimum in int_fields.items():
        if key in doc:
            value = _int(problems, doc, key, minimum)
            if value is not None:
                fed_kwargs[key] = value
    for key in ("refine_positions", "training_epochs"):
        if doc.get(key) is not None:
            value = _int(problems, doc, key, 0)
            if value is not None:
                fed_kwargs[key] = value
    if "master_seed" in doc:
        value = _int(problems, doc, "master_seed", 0)
        if value is not None:
            fed_kwargs["master_seed"] = value
    if "alpha" in doc:
        alpha = doc["alpha"]
        if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
            problems["alpha"] = f"expected a number, got {alpha!r}"
        else:
            fed_kwargs["alpha"] = float(alpha)
    if "partition" in doc:
        fed_kwargs["partition"] = doc["partition"]
    fed_kwargs["dataset"] = dataset
    federation = FederationConfig(**fed_kwargs)
    if method == "refhdc":
        checked = federation
    else:
        checked = federation.as_baseline()
    for key, msg in checked.problems().items():
        problems.setdefault(key, msg)

    normalization = doc.get("normalization") or default_normalization(dataset)
    if normalization not in NORMALIZATION_MODES:
        problems["normalization"] = f"must be one of {NORMALIZATION_MODES}"

    rffm_doc = doc.get("rffm", {})
    rffm = RffmSettings()
    if isinstance(rffm_doc, bool):
        rffm.enabled = rffm_doc
    elif isinstance(rffm_doc, dict):
        for key in sorted(set(rffm_doc) - {"enabled", "features", "sigma"}):
            problems[f"rffm.{key}"] = "unknown field"
        rffm.enabled = bool(rffm_doc.get("enabled", True))
        if "features" in rffm_doc:
            value = _int(problems, rffm_doc, "features", 1)
            if value is None:
                problems["rffm.features"] = problems.pop("features")
            else:
                rffm.features = value
        sigma = rffm_doc.get("sigma")
        if sigma is not None and (isinstance(sigma, bool) or not isinstance(sigma, (int, float)) or sigma <= 0):
            problems["rffm.sigma"] = f"must be a positive number, got {sigma!r}"
        else:
            rffm.sigma = float(sigma) if sigma is not None else None
    else:
        problems["rffm"] = "expected an object or a boolean"
    if rffm.sigma is None:
        rffm.sigma = default_sigma(dataset)

    train_limit = _int(problems, doc, "train_limit", 1, optional=True)
    shape = {}
    for key in ("train_size", "num_classes", "input_dim"):
        shape[key] = _int(problems, doc, key, 1, optional=True)

    manifest = doc.get("manifest")
    if manifest is not None:
        if not isinstance(manifest, str):
            problems["manifest"] = "expected a path string"
        elif base_dir is not None and not Path(manifest).is_absolute():
            manifest = str((base_dir / manifest).resolve())

    output_dir = doc.get("output_dir")
    if problems:
        raise ConfigError(problems)
    return RunConfig(
        federation=federation, method=method, manifest=manifest, normalization=normalization,
        rffm=rffm, train_limit=train_limit, output_dir=output_dir, name=doc.get("name"), **shape,
    )


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError({"<file>": f"{path}: {exc}"}) from None
    if overrides:
        doc = {ALIASES.get(k, k): v for k, v in doc.items()}
        doc.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(doc, path.parent)
