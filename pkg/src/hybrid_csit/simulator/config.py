"""Experiment configuration and its textual forms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import fec
from ..modem import get_constellation

SCENARIOS = ("classical", "hybrid-continuous", "hybrid-fixed", "hybrid-coded", "imperfect-csir")
DETECTORS = ("ml", "ls")
ALGORITHMS = ("single", "iterative")
QUANTIZERS = ("explicit", "surrogate", "auto")
DEFAULT_SNR_GRID = tuple(float(s) for s in range(0, 31, 3))
TRACKING_OFFSET_DB = -30.0


class ConfigError(ValueError):
    pass


def parse_snr_grid(text: str) -> tuple:
    """Parse ``"0,3,6"`` or an inclusive range ``"0:3:30"``."""
    text = text.strip()
    if not text:
        raise ConfigError("empty SNR grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad SNR range {text!r}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(round(start + k * step, 12)) for k in range(n))
    return tuple(float(p) for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class CsirSetting:
    """User-side channel knowledge: perfect, tracking or a fixed level in dB."""

    mode: str = "perfect"
    level_db: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> "CsirSetting":
        text = text.strip().lower()
        if text in ("perfect", "tracking"):
            return cls(text, TRACKING_OFFSET_DB if text == "tracking" else None)
        if text.startswith("fixed:"):
            try:
                level = float(text.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad CSIR level in {text!r}") from exc
            return cls("fixed", level)
        raise ConfigError(f"CSIR must be perfect, tracking or fixed:<dB>, got {text!r}")

    def __str__(self) -> str:
        if self.mode == "fixed":
            return f"fixed:{self.level_db:g}"
        return self.mode


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "hybrid-continuous"
    antennas: int = 4
    t_fb: int = 20
    snr_db: tuple = DEFAULT_SNR_GRID
    trials: int = 10_000
    seed: int = 0
    detector: str = "ls"
    algorithm: str = "iterative"
    quantizer: str = "auto"
    constellation: str = "qpsk"
    code: str = "r12"
    csir: CsirSetting = field(default_factory=CsirSetting)
    t_q: Optional[int] = None
    bits_rounding: str = "floor"
    max_iter: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if len(self.snr_db) == 0:
            raise ConfigError("SNR grid must be nonempty")
        if self.antennas < 2:
            raise ConfigError("need at least 2 antennas")
        if self.t_fb < 2:
            raise ConfigError("T_fb must be >= 2")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.quantizer not in QUANTIZERS:
            raise ConfigError(f"quantizer must be one of {QUANTIZERS}")
        if self.bits_rounding not in ("floor", "ceil"):
            raise ConfigError("bits rounding must be floor or ceil")
        if self.t_q is not None and not 1 <= self.t_q < self.t_fb:
            raise ConfigError(f"T_q override must lie in [1, {self.t_fb - 1}]")
        if self.max_iter < 1 or self.workers < 1:
            raise ConfigError("max_iter and workers must be >= 1")
        if isinstance(self.csir, str):
            object.__setattr__(self, "csir", CsirSetting.parse(self.csir))
        if self.scenario == "imperfect-csir" and self.csir.mode == "perfect":
            object.__setattr__(self, "csir", CsirSetting.parse("tracking"))
        if self.scenario == "classical" and self.csir.mode != "perfect":
            raise ConfigError("CSIR imperfection has no effect on classical training")
        if self.detector == "ml" and self.scenario == "hybrid-coded":
            raise ConfigError("ML detection is not available for coded feedback")
        try:
            get_constellation(self.constellation)
            fec.get_code(self.code)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    @property
    def uses_constellation(self) -> bool:
        return self.scenario in ("hybrid-fixed", "hybrid-coded", "imperfect-csir")


# CLI flag name -> (config field, converter)
FLAG_FIELDS = {
    "scenario": ("scenario", str),
    "snr-db": ("snr_db", parse_snr_grid),
    "antennas": ("antennas", int),
    "tfb": ("t_fb", int),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "detector": ("detector", str),
    "algorithm": ("algorithm", str),
    "quantizer": ("quantizer", str),
    "constellation": ("constellation", str),
    "code": ("code", str),
    "csir": ("csir", CsirSetting.parse),
    "tq": ("t_q", int),
    "bits-rounding": ("bits_rounding", str),
    "max-iter": ("max_iter", int),
    "workers": ("workers", int),
    "out": ("out", str),
}


def read_config_file(path: str) -> dict:
    """Read ``key=value`` lines (``#`` comments allowed) into raw strings.

    Keys are flag names with or without leading dashes; underscores and
    dashes are interchangeable.
    """
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-").lower()
        if key == "t-fb":
            key = "tfb"
        if key == "t-q":
            key = "tq"
        if key not in FLAG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values
