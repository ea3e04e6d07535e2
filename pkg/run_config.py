"""
Run files: INI text with the sections [grid], [physics], [time], [scenario],
[solver], [output] and [certificates].

Every key is checked before anything is computed; unknown sections and keys
are errors that name the offending key.

Example:
    [grid]
    Nr = 32
    Nz = 32

    [physics]
    nu = 1.0

    [scenario]
    name = swirl_decay
"""

import configparser
import hashlib
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import config
from cases import SCENARIOS
from certificates import CertificateOptions
from dynamics import SimConfig
from errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIRECTORY = "run"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: '{text}'")
    return int(value)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(item) for item in text.replace(",", " ").split())


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "default") else float(text)


def _parse_optional_str(text: str) -> Optional[str]:
    stripped = text.strip()
    return None if stripped.lower() in ("", "none", "default") else stripped


# section -> key -> (parser, target, attribute)
_SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], str, str]]] = {
    "grid": {
        "R": (float, "sim", "R"),
        "a": (float, "sim", "a"),
        "Nr": (_parse_int, "sim", "Nr"),
        "Nz": (_parse_int, "sim", "Nz"),
    },
    "physics": {
        "nu": (float, "sim", "nu"),
    },
    "time": {
        "dt": (float, "sim", "dt"),
        "T": (float, "sim", "T"),
        "scheme": (str.strip, "sim", "scheme"),
        "cfl_safety": (float, "sim", "cfl_safety"),
        "record_every": (_parse_int, "sim", "record_every"),
    },
    "scenario": {
        "name": (str.strip, "sim", "case"),
        "amplitude": (_parse_optional_float, "sim", "amplitude"),
        "forcing_amplitude": (float, "sim", "forcing_amplitude"),
    },
    "solver": {
        "advection": (str.strip, "sim", "advection"),
        "elliptic_method": (_parse_optional_str, "sim", "elliptic_method"),
        "track_phi": (_parse_bool, "sim", "track_phi"),
    },
    "output": {
        "directory": (str.strip, "output", "directory"),
    },
    "certificates": {
        "eps0": (float, "certificates", "eps0"),
        "delta": (float, "certificates", "delta"),
        "s_values": (_parse_float_list, "certificates", "s_values"),
        "c0": (float, "certificates", "c0"),
        "constant_c": (float, "certificates", "constant_c"),
        "interaction_d": (float, "certificates", "interaction_d"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """A validated run file."""

    sim: SimConfig
    certificates: CertificateOptions = field(default_factory=CertificateOptions)
    output_directory: str = DEFAULT_OUTPUT_DIRECTORY

    def resolve_output(self) -> str:
        """Absolute output directory; relative paths resolve under the output root."""
        if os.path.isabs(self.output_directory):
            return self.output_directory
        return os.path.abspath(os.path.join(config.get_output_root(), self.output_directory))

    def canonical_text(self) -> str:
        """Deterministic INI text of every setting, defaults included."""
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (_, target, attribute) in keys.items():
                lines.append(f"{key} = {_format_value(self._value(target, attribute))}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def _value(self, target: str, attribute: str) -> Any:
        if target == "sim":
            return getattr(self.sim, attribute)
        if target == "certificates":
            return getattr(self.certificates, attribute)
        return self.output_directory

    def to_dict(self) -> dict:
        return {"sim": self.sim.to_dict(), "certificates": self.certificates.to_dict(),
                "output_directory": self.output_directory}


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def parse_run_config(text: str) -> RunConfig:
    """
    Parse and validate run-file text.

    Raises:
        ConfigError: syntax errors, unknown sections or keys, unparsable or out-of-range values
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # keys are case-sensitive (Nr, T)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"Malformed run file: {exc}") from exc

    values: dict[str, dict[str, Any]] = {"sim": {}, "certificates": {}, "output": {}}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"Unknown section [{section}]; expected one of {', '.join(_SCHEMA)}",
                              key=section)
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"Unknown key '{key}' in [{section}]; expected one of "
                                  f"{', '.join(_SCHEMA[section])}", key=key)
            parse, target, attribute = _SCHEMA[section][key]
            try:
                values[target][attribute] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"Invalid value for '{key}' in [{section}]: {exc}", key=key) from exc

    if "nu" not in values["sim"]:
        raise ConfigError("Missing required key 'nu' in [physics]", key="nu")
    sim = SimConfig(**values["sim"]).validate()
    if sim.case not in SCENARIOS:
        raise ConfigError(f"Unknown scenario '{sim.case}'; available: {', '.join(sorted(SCENARIOS))}",
                          key="name")
    try:
        certificates = replace(CertificateOptions(), **values["certificates"]).validate()
    except DomainError as exc:
        raise ConfigError(f"Invalid [certificates] setting: {exc}") from exc
    run_config = RunConfig(sim, certificates, values["output"].get("directory", DEFAULT_OUTPUT_DIRECTORY))
    logger.debug("Parsed run file for scenario %s", sim.case)
    return run_config


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"Cannot read run file {path}: {exc}") from exc
    return parse_run_config(text)


def known_keys() -> dict[str, list[str]]:
    return {section: list(keys) for section, keys in _SCHEMA.items()}
