"""Run configuration: a JSON document with nested sections.

Example::

    {
      "field": {"family": "field-a", "params": {}},
      "lines": {"kind": "fan", "angles": 8, "offsets": 5, "max_offset": 2.0},
      "ladder": [16, 32, 64],
      "tolerances": {"rtol": 1e-10, "atol": 1e-12, "quadrature": 1e-12, "extrapolation": 0.5},
      "output": "out",
      "seed": 0
    }

Command sections (``invert``, ``bounds``, ``theorem``, ``counterexample``)
are optional; missing keys take the defaults below.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .fields import FAMILIES


class ConfigError(ValueError):
    pass


DEFAULT_TOLERANCES = {"rtol": 1e-10, "atol": 1e-12, "quadrature": 1e-12, "extrapolation": 0.5}

DEFAULT_SECTIONS = {
    "invert": {"L": 4.0, "resolution": 128, "window": "hann", "max_flagged": 0.01, "recover_V": False},
    "bounds": {"speeds": [], "offsets": [1.0], "R": None, "r": 1.0},
    "theorem": {"data": [{"speed": 32.0, "offset": "auto", "angle": 0.0}], "samples": 0,
                "speed_range": [32.0, 64.0]},
    "counterexample": {"nodes": 2001, "J": 256, "I": 321, "Q": 8.0, "L": 5.5, "resolution": 111,
                       "verify_angles": 32, "verify_offsets": 64},
}

LINE_KINDS = ("fan", "explicit")
SECTION_KEYS = set(DEFAULT_SECTIONS)
TOP_KEYS = {"field", "lines", "ladder", "tolerances", "output", "seed"} | SECTION_KEYS


@dataclass
class RunConfig:
    field: dict = dc_field(default_factory=lambda: {"family": "field-a", "params": {}})
    lines: dict = dc_field(default_factory=lambda: {"kind": "fan", "angles": 8, "offsets": 5,
                                                    "max_offset": 2.0})
    ladder: list = dc_field(default_factory=lambda: [16.0, 32.0, 64.0])
    tolerances: dict = dc_field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: str = "out"
    seed: int = 0
    invert: dict = dc_field(default_factory=dict)
    bounds: dict = dc_field(default_factory=dict)
    theorem: dict = dc_field(default_factory=dict)
    counterexample: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        self.tolerances = tol
        for name, defaults in DEFAULT_SECTIONS.items():
            merged = copy.deepcopy(defaults)
            merged.update(getattr(self, name) or {})
            setattr(self, name, merged)
        self.ladder = [float(s) for s in self.ladder]
        self.validate()

    def validate(self):
        fam = self.field.get("family")
        if fam not in FAMILIES:
            raise ConfigError(f"unknown field family {fam!r}; choose from {sorted(FAMILIES)}")
        if not isinstance(self.field.get("params", {}), dict):
            raise ConfigError("field.params must be a mapping")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerance {k!r} must be a positive number, got {v!r}")
        s = np.asarray(self.ladder, dtype=float)
        if s.size == 0 or np.any(s <= 0):
            raise ConfigError("ladder must hold positive speeds")
        if s.size > 1:
            r = s[1:] / s[:-1]
            if np.any(r <= 1) or np.ptp(r) > 1e-12 * r[0]:
                raise ConfigError(f"ladder {self.ladder} is not strictly geometric")
        kind = self.lines.get("kind")
        if kind not in LINE_KINDS:
            raise ConfigError(f"lines.kind must be one of {LINE_KINDS}, got {kind!r}")
        if kind == "fan":
            for k in ("angles", "offsets"):
                if int(self.lines.get(k, 0)) < 1:
                    raise ConfigError(f"lines.{k} must be >= 1")
            if float(self.lines.get("max_offset", -1)) < 0:
                raise ConfigError("lines.max_offset must be >= 0")
        elif not self.lines.get("items"):
            raise ConfigError("explicit line set needs a nonempty 'items' list")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        """sha256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**copy.deepcopy(data))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps() + "\n")
        return path

    def build_field(self):
        from .fields import FieldError, build_field

        try:
            return build_field(self.field["family"], **self.field.get("params", {}))
        except (TypeError, FieldError) as exc:
            raise ConfigError(f"bad field parameters: {exc}") from exc

    def line_set(self):
        """(thetas, xs) for the configured lines; fan lines are angle-major."""
        from .xray import sinogram_lines

        if self.lines["kind"] == "fan":
            L = self.lines
            I = int(L["offsets"])
            Q = float(L["max_offset"])
            if I == 1:
                Q = 0.0
            J = int(L["angles"])
            if L.get("full_circle"):
                phis = 2 * np.pi * np.arange(J) / J
                qs = np.linspace(-Q, Q, I) if I > 1 else np.zeros(1)
                P, Qg = np.meshgrid(phis, qs, indexing="ij")
                th = np.stack([np.cos(P), np.sin(P)], axis=-1).reshape(-1, 2)
                perp = np.stack([np.sin(P), -np.cos(P)], axis=-1).reshape(-1, 2)
                return th, Qg.reshape(-1, 1) * perp
            if I == 1:
                phis = np.pi * np.arange(J) / J
                th = np.stack([np.cos(phis), np.sin(phis)], axis=-1)
                return th, np.zeros_like(th)
            return sinogram_lines(J, I, Q)
        th, xs = [], []
        for item in self.lines["items"]:
            t = np.asarray(item["theta"], dtype=float)
            nt = np.linalg.norm(t)
            if nt == 0:
                raise ConfigError("line direction must be nonzero")
            t = t / nt
            x = np.asarray(item.get("x", np.zeros_like(t)), dtype=float)
            if x.shape != t.shape:
                raise ConfigError("line direction and offset dimensions differ")
            th.append(t)
            xs.append(x - (x @ t) * t)
        return np.array(th), np.array(xs)
