"""Experiment configuration: TOML parsing, canonical form and hashing.

The canonical serialization (sorted keys, %.17g floats) defines equality
and the config hash embedded in every output artifact.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

try:
    import tomllib
except ImportError:                                    # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

_DEFAULTS = {
    "seed": 42,
    "dimension": 2,
    "crack": {"family": "flat", "a": 0.5, "validity_radius": 1.0},
    "potential": {"family": "zero", "c": 0.0, "delta": 0.5, "hypothesis": "H1"},
    "mesh": {"beta_g": 2.0},
    "field": {"source": "manufactured", "k": 1, "m": 1},
    "radii": {"ratio": 1.15},
    "modes": {"k_max": 4},
    "output": {"dir": "out"},
}

_RANGES = {
    ("dimension",): lambda v: v in (2, 3),
    ("seed",): lambda v: isinstance(v, int) and v >= 0,
    ("crack", "family"): lambda v: v in ("flat", "paraboloid", "quartic"),
    ("crack", "a"): lambda v: 0.0 <= v <= 10.0,
    ("crack", "validity_radius"): lambda v: 0.0 < v <= 100.0,
    ("potential", "family"): lambda v: v in ("zero", "inverse_square_sub",
                                             "constant", "smooth_radial"),
    ("potential", "delta"): lambda v: 0.0 < v <= 2.0,
    ("potential", "hypothesis"): lambda v: v in ("H1", "H2"),
    ("mesh", "beta_g"): lambda v: 1.0 <= v <= 4.0,
    ("field", "source"): lambda v: v in ("manufactured", "solve"),
    ("field", "k"): lambda v: isinstance(v, int) and 1 <= v <= 12,
    ("radii", "ratio"): lambda v: 1.01 <= v <= 2.0,
    ("modes", "k_max"): lambda v: isinstance(v, int) and 1 <= v <= 12,
}


def _merge(base, override):
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    raise ConfigError(f"unserializable config value {v!r}")


def canonical_serialize(tree):
    """Canonical TOML text: sorted keys, %.17g floats, sorted sections."""
    lines = []
    scalars = {k: v for k, v in tree.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in tree.items() if isinstance(v, dict)}
    for key in sorted(scalars):
        lines.append(f"{key} = {_format_value(scalars[key])}")
    for key in sorted(tables):
        lines.append("")
        lines.append(f"[{key}]")
        sub = tables[key]
        for k2 in sorted(sub):
            if isinstance(sub[k2], dict):
                raise ConfigError("config nesting deeper than one table "
                                  "is not supported")
            lines.append(f"{k2} = {_format_value(sub[k2])}")
    return "\n".join(lines) + "\n"


class ExperimentConfig:
    """Validated configuration with canonical serialization and hash."""

    def __init__(self, tree):
        self.tree = _merge(_DEFAULTS, tree)
        self._validate()

    @classmethod
    def from_file(cls, path):
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p, "rb") as fh:
            try:
                tree = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config parse error in {p}: {exc}") from exc
        return cls(tree)

    @classmethod
    def from_text(cls, text):
        try:
            tree = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        return cls(tree)

    def _validate(self):
        for path, check in _RANGES.items():
            node = self.tree
            for key in path[:-1]:
                node = node.get(key, {})
            if path[-1] in node and not check(node[path[-1]]):
                raise ConfigError(
                    f"config value {'.'.join(path)} = {node[path[-1]]!r} "
                    "outside its documented range"
                )

    def get(self, *path, default=None):
        node = self.tree
        for key in path:
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    def section(self, name):
        return dict(self.tree.get(name, {}))

    def canonical(self):
        return canonical_serialize(self.tree)

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and \
            self.canonical() == other.canonical()


def bundled_config_path(name):
    """Path of a config shipped with the package (by stem name)."""
    from importlib.resources import files

    p = files("cracklab").joinpath(f"configs/{name}.toml")
    return p
