"""Pipeline configuration as ``key = value`` sections.

Floats are written with ``repr`` so a configuration survives
``from_string(to_string())`` exactly.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields

SECTIONS = {
    "grid": ("band", "collar_band", "n_times"),
    "path": ("tilt", "w_spec"),
    "collar": ("t_min", "eps_values", "A_values", "oracle_spacing"),
    "glue": ("mass_factor", "eps_min", "eps_shrink"),
    "tolerances": ("tol_root", "tol_a", "tol_area", "tol_pointwise", "tol_H", "tol_oracle",
                   "tol_R", "tol_boundary", "tol_ode"),
    "run": ("output_dir", "seed"),
}


@dataclass
class PipelineConfig:
    band: int = 32
    collar_band: int = 24
    n_times: int = 65
    tilt: float = 0.5
    w_spec: str = "default"
    t_min: float = 1e-3
    eps_values: tuple = (1e-2, 1e-3)
    A_values: tuple = (10.0, 30.0, 100.0)
    oracle_spacing: float = 0.0015
    mass_factor: float = 1.02
    eps_min: float = 1e-8
    eps_shrink: float = 0.5
    tol_root: float = 1e-7
    tol_a: float = 1e-9
    tol_area: float = 1e-7
    tol_pointwise: float = 1e-4
    tol_H: float = 1e-4
    tol_oracle: float = 1e-4
    tol_R: float = 1e-6
    tol_boundary: float = 1e-5
    tol_ode: float = 1e-9
    output_dir: str = "degenhorizon-out"
    seed: int = 0

    def __post_init__(self):
        self.eps_values = tuple(float(x) for x in self.eps_values)
        self.A_values = tuple(float(x) for x in self.A_values)
        self.validate()

    def validate(self):
        for f in fields(self):
            if f.name.startswith("tol_") and not getattr(self, f.name) > 0.0:
                raise ValueError(f"{f.name} must be positive")
        if not self.eps_values or not self.A_values:
            raise ValueError("search ranges must be nonempty")
        if min(self.eps_values) <= 0.0 or min(self.A_values) <= 0.0:
            raise ValueError("search ranges must be positive")
        if self.band < 4 or self.collar_band < 4:
            raise ValueError("band too small")
        if not 0.0 < self.t_min < 0.25:
            raise ValueError("t_min must lie in (0, 1/4)")
        if not self.mass_factor > 0.0 or not 0.0 < self.eps_shrink < 1.0:
            raise ValueError("invalid glue parameters")

    def to_string(self):
        cp = _parser()
        for sec, keys in SECTIONS.items():
            cp[sec] = {k: _dump(getattr(self, k)) for k in keys}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_string(cls, text):
        cp = _parser()
        cp.read_string(text)
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for sec in cp.sections():
            if sec not in SECTIONS:
                raise ValueError(f"unknown section [{sec}]")
            for k, v in cp[sec].items():
                if k not in SECTIONS[sec]:
                    raise ValueError(f"unknown key {k} in [{sec}]")
                kwargs[k] = _load(v, types[k])
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_string(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_string())

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _parser():
    cp = configparser.ConfigParser()
    cp.optionxform = str
    return cp


def _dump(v):
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load(text, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "tuple":
        return tuple(float(x) for x in text.split(",") if x.strip())
    if typ == "int":
        return int(text)
    if typ == "float":
        return float(text)
    return text
