"""Run configuration: one JSON document drives the whole pipeline.

The coupling may be given either as lambda directly or as the bare coupling
g, resolved through lambda = g^4 / (1 + g^4); exactly one of the two must be
present.  Whichever the user wrote is what serialization writes back.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .models import GROUPS

STAGES = (
    "spectrum",
    "localize",
    "extract",
    "vacuum",
    "lightcone",
    "propagator",
    "scatter",
    "detect",
)


@dataclass
class ModelConfig:
    group: str
    lam: float | None = None
    g: float | None = None
    l_intermediate: int = 8
    L_large: int = 20
    boundary: str = "OBC"

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"model.group must be one of {GROUPS}")
        if (self.lam is None) == (self.g is None):
            raise ValueError("exactly one of model.lambda or model.g is required")
        if self.boundary not in ("OBC", "PBC"):
            raise ValueError("model.boundary must be OBC or PBC")

    @property
    def coupling(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        g4 = float(self.g) ** 4
        return g4 / (1.0 + g4)


@dataclass
class MethodConfig:
    band_label: str = "0_1++"
    n_bands: int = 1
    spectrum_method: str = "dense"
    spectrum_count: int | None = None
    window_width: int = 3
    restarts: int = 8
    seed: int = 7
    max_chi: int = 64
    cutoff: float = 1e-10
    dmrg_tol: float = 1e-12
    krylov_tol: float = 1e-10
    dt: float = 0.2
    t_max: float = 10.0
    level_fraction: float = 0.01
    detector_width: int = 3


@dataclass
class PacketConfig:
    center: int
    momentum: float
    width: float


@dataclass
class RunConfig:
    model: ModelConfig
    method: MethodConfig = field(default_factory=MethodConfig)
    packets: list = field(default_factory=list)
    detectors: list = field(default_factory=list)
    stages: list = field(default_factory=lambda: list(STAGES))
    out: str = "run_out"

    def __post_init__(self):
        for name in self.stages:
            if name not in STAGES:
                raise ValueError(f"unknown stage '{name}'")

    def to_dict(self) -> dict:
        model = {"group": self.model.group}
        if self.model.lam is not None:
            model["lambda"] = self.model.lam
        else:
            model["g"] = self.model.g
        model.update(
            l_intermediate=self.model.l_intermediate,
            L_large=self.model.L_large,
            boundary=self.model.boundary,
        )
        return {
            "model": model,
            "method": asdict(self.method),
            "packets": [asdict(p) for p in self.packets],
            "detectors": list(self.detectors),
            "stages": list(self.stages),
            "out": self.out,
        }


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    model_raw = dict(raw.pop("model", None) or {})
    if "group" not in model_raw:
        raise ValueError("model.group is required")
    known_model = {"group", "lambda", "g", "l_intermediate", "L_large", "boundary"}
    unknown = set(model_raw) - known_model
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    model = ModelConfig(
        group=model_raw["group"],
        lam=model_raw.get("lambda"),
        g=model_raw.get("g"),
        l_intermediate=int(model_raw.get("l_intermediate", 8)),
        L_large=int(model_raw.get("L_large", 20)),
        boundary=model_raw.get("boundary", "OBC"),
    )
    method_raw = dict(raw.pop("method", None) or {})
    known_method = set(MethodConfig.__dataclass_fields__)
    unknown = set(method_raw) - known_method
    if unknown:
        raise ValueError(f"unknown method fields: {sorted(unknown)}")
    method = MethodConfig(**method_raw)
    packets = [PacketConfig(**p) for p in raw.pop("packets", None) or []]
    detectors = list(raw.pop("detectors", None) or [])
    stages = list(raw.pop("stages", None) or STAGES)
    out = raw.pop("out", "run_out")
    if raw:
        raise ValueError(f"unknown config fields: {sorted(raw)}")
    return RunConfig(
        model=model,
        method=method,
        packets=packets,
        detectors=detectors,
        stages=stages,
        out=out,
    )


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(path: str, config: RunConfig):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_override(raw: dict, assignment: str) -> dict:
    """KEY=VALUE with a dotted key path; VALUE parsed as JSON when it is."""
    if "=" not in assignment:
        raise ValueError(f"override '{assignment}' is not KEY=VALUE")
    key, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"override path '{key}' crosses a non-object field")
    node[parts[-1]] = value
    return raw
