"""Experiment configuration: JSON on disk, validated dataclasses in memory."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidParameterError
from .measures import Lattice, ResiduePattern


@dataclass
class ProbeConfig:
    B: float = 1.0
    T: float = 8.0


@dataclass
class PlanConfig:
    tau_min: float = 0.0
    horizon: float = 8.0
    M: int = 64
    nu_window: list = field(default_factory=lambda: [-3.5, 3.5])


@dataclass
class ScenarioConfig:
    mode: str = "random"
    K: int = 4
    seed: int = 0
    index_box: list = field(default_factory=lambda: [[0, 2], [-3, 3]])
    amplitude_sigma: float = 0.3
    taps: list = field(default_factory=list)
    pattern: Optional[dict] = None


@dataclass
class NoiseConfig:
    snr_db: list = field(default_factory=list)
    trials: int = 100
    identify_snr_db: Optional[float] = None
    redraw_scenario: bool = False


@dataclass
class EstimationConfig:
    order: str = "auto"
    rank_tol: Optional[float] = None
    strict: bool = True


@dataclass
class DensityConfig:
    alpha: float = 0.4
    radii: list = field(default_factory=lambda: [5.0, 10.0, 20.0])
    source: str = "lattice"
    box: int = 40
    grid_step: Optional[float] = None
    pattern: Optional[dict] = None
    points_csv: Optional[str] = None
    expected_verdict: Optional[str] = None


@dataclass
class VerifyConfig:
    B: float = 1.0
    trials: int = 100
    max_taps: int = 8
    index_box: list = field(default_factory=lambda: [[-4, 4], [-4, 4]])
    grid_dt: Optional[float] = None
    signal: str = "gaussian"
    stft_points: int = 20
    stft_extent: float = 2.0
    stft_dt: float = 1.0 / 64.0
    stft_half_width: float = 12.0
    ratio_tol: float = 1e-3
    stft_tol: float = 1e-6


@dataclass
class ChecksConfig:
    tap_tol: float = 1e-6


@dataclass
class OutputsConfig:
    dir: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv"])


_SECTIONS = {
    "probe": ProbeConfig,
    "plan": PlanConfig,
    "scenario": ScenarioConfig,
    "noise": NoiseConfig,
    "estimation": EstimationConfig,
    "density": DensityConfig,
    "verify": VerifyConfig,
    "checks": ChecksConfig,
    "outputs": OutputsConfig,
}


@dataclass
class ExperimentConfig:
    lattice: list = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        unknown = set(data) - {"lattice"} - set(_SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        kwargs = {}
        if "lattice" in data:
            kwargs["lattice"] = copy.deepcopy(data["lattice"])
        for name, section_cls in _SECTIONS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(name, "section must be an object")
            allowed = {f.name for f in fields(section_cls)}
            bad = set(raw) - allowed
            if bad:
                raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown field")
            kwargs[name] = section_cls(**copy.deepcopy(raw))
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        if seed is None:
            return self
        cfg = copy.deepcopy(self)
        cfg.scenario.seed = int(seed)
        return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def fixture_path(name: str) -> Path:
    return Path(__file__).parent / "fixtures" / name


def _number(field_name: str, value, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field_name, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(field_name, "must be finite")
    if integer and int(value) != value:
        raise ConfigError(field_name, "must be an integer")
    if positive and value <= 0:
        raise ConfigError(field_name, "must be positive")
    return value


def build_lattice(cfg: ExperimentConfig) -> Lattice:
    a = cfg.lattice
    if (not isinstance(a, list) or len(a) != 2
            or any(not isinstance(row, list) or len(row) != 2 for row in a)):
        raise ConfigError("lattice", "expected a 2x2 list of numbers")
    for i, row in enumerate(a):
        for j, v in enumerate(row):
            _number(f"lattice[{i}][{j}]", v)
    try:
        return Lattice(a)
    except InvalidParameterError as exc:
        raise ConfigError("lattice", str(exc)) from exc


def build_pattern(raw, where: str) -> ResiduePattern:
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected a pattern object")
    try:
        return ResiduePattern.from_dict(raw)
    except (KeyError, TypeError) as exc:
        raise ConfigError(where, f"incomplete pattern ({exc})") from exc
    except InvalidParameterError as exc:
        raise ConfigError(where, str(exc)) from exc


def pattern_indices(pattern: ResiduePattern, index_box) -> np.ndarray:
    """Integer indices of ``pattern`` inside ``[[i0, i1], [j0, j1]]``, row-major."""
    (i0, i1), (j0, j1) = index_box
    i, j = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    mask = pattern.contains(i, j)
    return np.column_stack([i[mask], j[mask]])


def _check_index_box(box, where: str):
    if (not isinstance(box, list) or len(box) != 2
            or any(not isinstance(r, list) or len(r) != 2 for r in box)):
        raise ConfigError(where, "expected [[i_min, i_max], [j_min, j_max]]")
    for k, (lo, hi) in enumerate(box):
        _number(f"{where}[{k}]", lo, integer=True)
        _number(f"{where}[{k}]", hi, integer=True)
        if hi < lo:
            raise ConfigError(f"{where}[{k}]", "upper index below lower index")


def validate_identify(cfg: ExperimentConfig) -> None:
    """Check every precondition of the estimation pipeline before computing."""
    lattice = build_lattice(cfg)
    B = _number("probe.B", cfg.probe.B, positive=True)
    _number("probe.T", cfg.probe.T)
    tau_min = _number("plan.tau_min", cfg.plan.tau_min)
    T = _number("plan.horizon", cfg.plan.horizon, positive=True)
    M = _number("plan.M", cfg.plan.M, positive=True, integer=True)
    if cfg.probe.T != T:
        raise ConfigError("probe.T", f"probe centre must equal plan.horizon ({T!r})")
    win = cfg.plan.nu_window
    if not isinstance(win, list) or len(win) != 2:
        raise ConfigError("plan.nu_window", "expected [nu_min, nu_max]")
    lo = _number("plan.nu_window[0]", win[0])
    hi = _number("plan.nu_window[1]", win[1])
    if hi <= lo:
        raise ConfigError("plan.nu_window", "nu_max must exceed nu_min")
    if hi - lo >= M / T:
        raise ConfigError("plan.nu_window", f"width {hi - lo:g} must be below M/horizon = {M / T:g}")
    sc = cfg.scenario
    if sc.mode not in ("random", "pattern", "explicit"):
        raise ConfigError("scenario.mode", "expected 'random', 'pattern' or 'explicit'")
    _number("scenario.seed", sc.seed, integer=True)
    if sc.mode == "random":
        K = _number("scenario.K", sc.K, positive=True, integer=True)
        _check_index_box(sc.index_box, "scenario.index_box")
        (i0, i1), (j0, j1) = sc.index_box
        if K > (i1 - i0 + 1) * (j1 - j0 + 1):
            raise ConfigError("scenario.K", "more taps than lattice points in index_box")
        _number("scenario.amplitude_sigma", sc.amplitude_sigma)
        if sc.amplitude_sigma < 0:
            raise ConfigError("scenario.amplitude_sigma", "must be nonnegative")
        corners = lattice.points([[i, j] for i in (i0, i1) for j in (j0, j1)])
        support = corners
    elif sc.mode == "pattern":
        _check_index_box(sc.index_box, "scenario.index_box")
        idx = pattern_indices(build_pattern(sc.pattern, "scenario.pattern"), sc.index_box)
        if idx.shape[0] == 0:
            raise ConfigError("scenario.pattern", "no pattern points inside index_box")
        K = idx.shape[0]
        support = lattice.points(idx)
    else:
        if not isinstance(sc.taps, list) or not sc.taps:
            raise ConfigError("scenario.taps", "explicit mode needs a nonempty tap list")
        K = len(sc.taps)
        pts = []
        for n, tap in enumerate(sc.taps):
            for key in ("a_re", "a_im", "tau", "nu"):
                if key not in tap:
                    raise ConfigError(f"scenario.taps[{n}].{key}", "missing")
                _number(f"scenario.taps[{n}].{key}", tap[key])
            if tap["a_re"] == 0 and tap["a_im"] == 0:
                raise ConfigError(f"scenario.taps[{n}]", "zero amplitude")
            if lattice.index_of(tap["tau"], tap["nu"]) is None:
                raise ConfigError(f"scenario.taps[{n}]", "not on the lattice")
            pts.append((tap["tau"], tap["nu"]))
        support = np.array(pts)
    if 2 * K + 1 > M:
        raise ConfigError("plan.M", f"need M >= 2K+1 = {2 * K + 1}, got {M}")
    if np.any(support[:, 0] < tau_min):
        raise ConfigError("scenario", f"tap delays fall below plan.tau_min = {tau_min!r}")
    if np.any(support[:, 1] < lo) or np.any(support[:, 1] >= hi):
        raise ConfigError("scenario", f"tap Dopplers fall outside plan.nu_window [{lo!r}, {hi!r})")
    lam_m = np.sqrt(B) * np.exp(-np.pi * (B * T) ** 2 / 2.0)
    if lam_m < 1e-300:
        raise ConfigError("plan.horizon", "B^2 T^2 too large: normalisation weights underflow")
    if cfg.estimation.order not in ("auto", "known"):
        raise ConfigError("estimation.order", "expected 'auto' or 'known'")
    if cfg.estimation.rank_tol is not None:
        _number("estimation.rank_tol", cfg.estimation.rank_tol, positive=True)
    _number("checks.tap_tol", cfg.checks.tap_tol, positive=True)
    if cfg.noise.identify_snr_db is not None:
        _number("noise.identify_snr_db", cfg.noise.identify_snr_db)


def validate_sweep(cfg: ExperimentConfig) -> None:
    validate_identify(cfg)
    if not isinstance(cfg.noise.snr_db, list) or not cfg.noise.snr_db:
        raise ConfigError("noise.snr_db", "sweep needs a nonempty SNR list")
    for k, v in enumerate(cfg.noise.snr_db):
        _number(f"noise.snr_db[{k}]", v)
    _number("noise.trials", cfg.noise.trials, positive=True, integer=True)


def validate_density(cfg: ExperimentConfig) -> None:
    build_lattice(cfg)
    d = cfg.density
    _number("density.alpha", d.alpha, positive=True)
    if not isinstance(d.radii, list) or not d.radii:
        raise ConfigError("density.radii", "expected a nonempty list")
    for k, r in enumerate(d.radii):
        _number(f"density.radii[{k}]", r, positive=True)
    if any(b <= a for a, b in zip(d.radii, d.radii[1:])):
        raise ConfigError("density.radii", "must be strictly increasing")
    if d.grid_step is not None:
        _number("density.grid_step", d.grid_step, positive=True)
    if d.source not in ("lattice", "pattern", "csv"):
        raise ConfigError("density.source", "expected 'lattice', 'pattern' or 'csv'")
    _number("density.box", d.box, positive=True, integer=True)
    if d.source == "pattern":
        pattern = build_pattern(d.pattern, "density.pattern")
        if d.box < pattern.modulus:
            raise ConfigError("density.box", "must be at least the pattern modulus")
    if d.source == "csv" and not d.points_csv:
        raise ConfigError("density.points_csv", "csv source needs a path")
    if d.expected_verdict is not None and d.expected_verdict not in (
            "Identifiable", "NotIdentifiable", "Boundary", "HypothesisViolated"):
        raise ConfigError("density.expected_verdict", "unknown verdict")


def validate_verify(cfg: ExperimentConfig) -> None:
    build_lattice(cfg)
    v = cfg.verify
    _number("verify.B", v.B, positive=True)
    _number("verify.trials", v.trials, positive=True, integer=True)
    _number("verify.max_taps", v.max_taps, positive=True, integer=True)
    _check_index_box(v.index_box, "verify.index_box")
    (i0, i1), (j0, j1) = v.index_box
    if v.max_taps > (i1 - i0 + 1) * (j1 - j0 + 1):
        raise ConfigError("verify.max_taps", "more taps than lattice points in index_box")
    if v.grid_dt is not None:
        _number("verify.grid_dt", v.grid_dt, positive=True)
    if v.signal not in ("gaussian", "zero", "random"):
        raise ConfigError("verify.signal", "expected 'gaussian', 'zero' or 'random'")
    _number("verify.stft_points", v.stft_points, positive=True, integer=True)
    _number("verify.stft_extent", v.stft_extent, positive=True)
    _number("verify.stft_dt", v.stft_dt, positive=True)
    _number("verify.stft_half_width", v.stft_half_width, positive=True)
    _number("verify.ratio_tol", v.ratio_tol, positive=True)
    _number("verify.stft_tol", v.stft_tol, positive=True)
    _number("scenario.seed", cfg.scenario.seed, integer=True)
