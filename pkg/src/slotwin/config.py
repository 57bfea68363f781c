"""Pipeline configuration and its plain-text ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_HEADER = "# slotwin-config v1"

# twist layout is [x, y, z, roll, pitch, yaw]
_DEFAULT_COV = {
    "cov_odo": [0.01] * 6,
    # detections carry no roll/pitch, so those entries are loose
    "cov_obs": [0.05, 0.05, 0.05, 0.5, 0.5, 0.05],
    "cov_chg": [0.02] * 6,
    "cov_cons": [0.1] * 6,
}


class ConfigError(ValueError):
    pass


def _diag(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=float))


def as_covariance(value) -> np.ndarray:
    """Accept 6 diagonal entries, a 6x6 matrix, or 36 row-major numbers."""
    a = np.asarray(value, dtype=float)
    if a.shape == (6,):
        return np.diag(a)
    if a.size == 36:
        return a.reshape(6, 6)
    raise ConfigError(f"covariance needs 6 or 36 numbers, got {a.size}")


@dataclass
class PipelineConfig:
    window: int = 10
    init_frames: int = 4
    gate: float = 4.0
    miss_limit: int = 3
    static_threshold: float = 0.5
    cov_odo: np.ndarray = field(default_factory=lambda: _diag(_DEFAULT_COV["cov_odo"]))
    cov_obs: np.ndarray = field(default_factory=lambda: _diag(_DEFAULT_COV["cov_obs"]))
    cov_chg: np.ndarray = field(default_factory=lambda: _diag(_DEFAULT_COV["cov_chg"]))
    cov_cons: np.ndarray = field(default_factory=lambda: _diag(_DEFAULT_COV["cov_cons"]))
    lm_lambda: float = 1e-4
    lm_max_iterations: int = 50
    lm_cost_tol: float = 1e-8
    lm_step_tol: float = 1e-10
    seed: int = 0
    use_objects: bool = True
    prediction: str = "polynomial"
    fixed_lag: bool = True
    match_class: bool = True

    def __post_init__(self):
        for name in ("cov_odo", "cov_obs", "cov_chg", "cov_cons"):
            setattr(self, name, as_covariance(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.window < 3:
            problems.append(f"window must be >= 3 (got {self.window})")
        if self.init_frames < 4:
            problems.append(f"init_frames must be >= 4 (got {self.init_frames})")
        if not self.gate > 0:
            problems.append(f"gate must be > 0 (got {self.gate})")
        if self.miss_limit < 0:
            problems.append(f"miss_limit must be >= 0 (got {self.miss_limit})")
        if self.static_threshold < 0:
            problems.append(f"static_threshold must be >= 0 (got {self.static_threshold})")
        if self.prediction not in ("polynomial", "last"):
            problems.append(f"prediction must be 'polynomial' or 'last' (got {self.prediction!r})")
        if self.lm_max_iterations < 0:
            problems.append("lm_max_iterations must be >= 0")
        for name in ("cov_odo", "cov_obs", "cov_chg", "cov_cons"):
            C = getattr(self, name)
            if not np.allclose(C, C.T, atol=1e-12):
                problems.append(f"{name} is not symmetric")
                continue
            try:
                np.linalg.cholesky(C)
            except np.linalg.LinAlgError:
                problems.append(f"{name} is not positive definite")
        if problems:
            raise ConfigError("; ".join(problems))

    def sqrt_information(self, kind: str) -> np.ndarray:
        """Upper factor S with S^T S = inverse covariance for a residual kind."""
        C = getattr(self, f"cov_{kind}")
        L = np.linalg.cholesky(np.linalg.inv(C))
        return L.T

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _format_value(v) -> str:
    if isinstance(v, np.ndarray):
        if np.count_nonzero(v - np.diag(np.diag(v))) == 0:
            return ", ".join(repr(float(x)) for x in np.diag(v))
        return ", ".join(repr(float(x)) for x in v.reshape(-1))
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: PipelineConfig) -> str:
    lines = [FORMAT_HEADER]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    defaults = PipelineConfig()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        kind = type(getattr(defaults, key))
        try:
            if kind is np.ndarray:
                values[key] = as_covariance([float(x) for x in val.replace(",", " ").split()])
            elif kind is bool:
                values[key] = _parse_bool(val)
            elif kind is int:
                values[key] = int(val)
            elif kind is float:
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
