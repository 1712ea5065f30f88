"""INI experiment configuration: parse, validate, and re-emit."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace

from ..array_channel import SystemConfig, is_power_of_two
from ..protocol import SCHEMES


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class ExperimentSpec:
    system: SystemConfig = field(default_factory=SystemConfig)
    snr_grid_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    trials: int = 1000
    schemes: tuple[str, ...] = SCHEMES
    master_seed: int = 2024
    n_paths: int = 3
    path_vars: tuple[float, ...] = (1.0, 0.01, 0.01)
    output_dir: str = "results"
    amcf_q: int | None = None
    amcf_iters: int = 50
    genie_he: bool = False
    workers: int = 1
    max_conflict_rate: float = 0.5

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("SNR grid is empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"unknown schemes {bad}; choose from {', '.join(SCHEMES)}")
        if len(self.path_vars) != self.n_paths:
            raise ValueError(f"{self.n_paths} paths but {len(self.path_vars)} variances")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.system.n_ue < 2:
            raise ValueError("n_ue must be at least 2 for hierarchical training")

    def with_overrides(self, **kw) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# section -> [(key, attribute, kind)]
_LAYOUT = {
    "system": [("n_bs", "n_bs", "pow2"), ("n_ue", "n_ue", "pow2"), ("n_rf", "n_rf", "int"),
               ("k_users", "k_users", "int"), ("p_total", "p_total", "float"),
               ("pilot_power", "pilot_mode", "pilot")],
    "channel": [("paths", "n_paths", "int"), ("gain_vars", "path_vars", "floats")],
    "amcf": [("q", "amcf_q", "optint"), ("iterations", "amcf_iters", "int")],
    "experiment": [("snr_db", "snr_grid_db", "floats"), ("trials", "trials", "int"),
                   ("schemes", "schemes", "names"), ("seed", "master_seed", "int"),
                   ("output_dir", "output_dir", "str"), ("genie_he", "genie_he", "bool"),
                   ("workers", "workers", "int"), ("max_conflict_rate", "max_conflict_rate", "float")],
}
_SYSTEM_KEYS = {"n_bs", "n_ue", "n_rf", "k_users", "p_total", "pilot_mode"}


def _find_line(text: str, section: str, key: str | None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return no
    return None


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind in ("int", "pow2"):
        val = int(raw, 0)
        if kind == "pow2" and not is_power_of_two(val):
            raise ValueError(f"{val} is not a power of two")
        return val
    if kind == "optint":
        return None if raw.lower() in ("", "auto", "none") else int(raw, 0)
    if kind == "float":
        return float(raw)
    if kind == "floats":
        return tuple(float(x) for x in re.split(r"[,\s]+", raw) if x)
    if kind == "names":
        return tuple(x for x in re.split(r"[,\s]+", raw) if x)
    if kind == "pilot":
        if raw not in ("split", "full"):
            raise ValueError(f"expected 'split' or 'full', got {raw!r}")
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def parse_config(text: str, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Parse INI text on top of ``base`` (defaults when omitted)."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse line {exc.errors[0][1]!r}" if exc.errors else str(exc), lineno)
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(":")[0] if hasattr(exc, "message") else str(exc), exc.lineno)
    except configparser.Error as exc:
        raise ConfigError(str(exc), getattr(exc, "lineno", None))

    base = base or ExperimentSpec()
    sys_vals = {k: getattr(base.system, k) for k in _SYSTEM_KEYS}
    top_vals = {}
    for section in parser.sections():
        if section not in _LAYOUT:
            raise ConfigError(f"unknown section [{section}]", _find_line(text, section, None))
        known = {key: (attr, kind) for key, attr, kind in _LAYOUT[section]}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _find_line(text, section, key))
            attr, kind = known[key]
            try:
                val = _convert(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}", _find_line(text, section, key))
            if section == "system":
                sys_vals[attr] = val
            else:
                top_vals[attr] = val
    try:
        system = SystemConfig(noise_var=base.system.noise_var, **sys_vals)
        return replace(base, system=system, **top_vals)
    except ValueError as exc:
        raise ConfigError(str(exc))


def load_config(path: str, base: ExperimentSpec | None = None) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}")
    return parse_config(text, base)


def _fmt(kind: str, val) -> str:
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in val)
    if kind == "names":
        return ", ".join(val)
    if kind == "bool":
        return "true" if val else "false"
    if kind == "optint":
        return "auto" if val is None else str(val)
    if kind == "float":
        return repr(float(val))
    return str(val)


def emit_config(spec: ExperimentSpec) -> str:
    """Canonical INI text; ``parse_config(emit_config(s)) == s``."""
    out = []
    for section, keys in _LAYOUT.items():
        out.append(f"[{section}]")
        for key, attr, kind in keys:
            src = spec.system if section == "system" else spec
            out.append(f"{key} = {_fmt(kind, getattr(src, attr))}")
        out.append("")
    return "\n".join(out)
