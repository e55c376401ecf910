"""Checked-in experiment configurations.

Presets bundle a ParameterSet with rendering defaults (PSF sharpness b,
pixel count P, sampling order n) so experiments need no hidden state. The
separation-study presets also carry the sweep's noise level and rank
tolerance; their JSON files document how the configurations were built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from ..model import ParameterSet

__all__ = ["Preset", "load_preset", "preset_names"]

_PACKAGE = "pronypencil.presets"


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    params: ParameterSet
    b: float
    P: int
    n: int
    q_target: Optional[float] = None
    sweep_snr: Optional[float] = None
    sweep_rank_tol: Optional[float] = None


def preset_names():
    files = resources.files(_PACKAGE)
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> Preset:
    try:
        raw = resources.files(_PACKAGE).joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    data = json.loads(raw)
    c = np.array(data["c_re"], dtype=float) + 1j * np.array(data["c_im"], dtype=float)
    params = ParameterSet(
        d=data["d"], M=len(data["t"]), t=np.array(data["t"]), c=c
    ).validate_strict()
    return Preset(
        name=data["name"],
        description=data["description"],
        params=params,
        b=float(data["b"]),
        P=int(data["P"]),
        n=int(data["n"]),
        q_target=data.get("q_target"),
        sweep_snr=data.get("sweep_snr"),
        sweep_rank_tol=data.get("sweep_rank_tol"),
    )
