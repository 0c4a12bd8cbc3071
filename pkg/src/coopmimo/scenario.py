"""Scenario configuration, BS/UE placement, and deterministic RNG streams.

The config file is YAML with nested sections (``scenario``, ``solver``,
``metrics``, ``sensing``); see ``DEFAULT_CONFIG_YAML`` below for the full
documented schema. All randomness is derived from one master seed through
a counter scheme (``default_rng([seed, drop_index, stream])``) so that
Monte-Carlo drops are independent and order-insensitive.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml


class ConfigError(ValueError):
    """Config parse or validation failure; the message names the offending field."""


# Substream ids for the per-drop counter scheme.
STREAM_PLACEMENT = 0
STREAM_LOS = 1
STREAM_FADING = 2
STREAM_SHADOWING = 3
STREAM_CSI_ERROR = 4
STREAM_SENSING = 5


def drop_rng(seed: int, drop_index: int, stream: int) -> np.random.Generator:
    """Independent generator for one (drop, purpose) pair.

    Seeding a ``SeedSequence`` with the entropy triple makes the stream a
    pure function of (seed, drop_index, stream): drops can run in any order,
    serial or parallel, and reproduce bit-identical draws.
    """
    return np.random.default_rng([int(seed), int(drop_index), int(stream)])


@dataclass(frozen=True)
class ScenarioConfig:
    """System-level scenario parameters (defaults: 16 BSs serve 32 UEs over 100 MHz)."""

    n_bs: int = 16                  # number of base stations
    nt: int = 4                     # antennas per BS (ULA, half-wavelength spacing)
    n_ue: int = 32                  # single-antenna users
    area_side: float = 400.0        # square deployment area side [m]
    carrier_freq: float = 3.5       # [GHz]
    bandwidth: float = 1.0e8        # [Hz]
    bs_height: float = 10.0         # [m]
    ue_height: float = 1.5          # [m]
    p_max_per_bs: float = 1.0       # per-BS power budget [W] (raw-gain mode / EE sweep)
    noise_figure: float = 9.0       # receiver noise figure [dB]
    rician_k: float = 10.0          # Rician K for LOS links [dB]
    cluster_size_l: int = 4         # serving BSs per UE in the user-centric scheme
    snr_sweep: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)  # transmit SNR points [dB]
    n_drops: int = 50               # Monte-Carlo drops
    seed: int = 1                   # master RNG seed
    # --- secondary knobs -------------------------------------------------
    rician_k_nlos: float = 0.0      # Rician K for NLOS links [dB]
    group_count: int = 4            # BS groups for the static (BS-centric) scheme
    min_bs_ue_distance: float = 10.0  # minimum 2D BS-UE distance [m]
    normalize_gains: bool = True    # normalize large-scale gains to median 1 per drop
    shadowing_std: float = 0.0      # log-normal shadowing std [dB]; 0 disables
    csi_error_std: float = 0.0      # relative CSI error std seen by the solver; 0 = perfect

    def __post_init__(self):
        self.validate()
        # normalize sequences to tuples so the config hashes stably
        object.__setattr__(self, "snr_sweep", tuple(float(x) for x in self.snr_sweep))

    def validate(self):
        if self.n_bs < 1:
            raise ConfigError("n_bs must be >= 1")
        if self.nt < 1:
            raise ConfigError("nt must be >= 1")
        if self.n_ue < 1:
            raise ConfigError("n_ue must be >= 1")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be > 0")
        if self.p_max_per_bs <= 0:
            raise ConfigError("p_max_per_bs must be > 0")
        if self.area_side <= 0:
            raise ConfigError("area_side must be > 0")
        if not (0.5 <= self.carrier_freq <= 100.0):
            raise ConfigError("carrier_freq outside the 0.5-100 GHz pathloss domain")
        if self.cluster_size_l < 1:
            raise ConfigError("cluster_size_l must be >= 1")
        if self.cluster_size_l > self.n_bs:
            raise ConfigError("cluster_size_l exceeds n_bs")
        if self.group_count < 1:
            raise ConfigError("group_count must be >= 1")
        if self.n_drops < 1:
            raise ConfigError("n_drops must be >= 1")
        if len(self.snr_sweep) == 0:
            raise ConfigError("snr_sweep must be non-empty")
        if self.bs_height <= 0 or self.ue_height <= 0:
            raise ConfigError("bs_height and ue_height must be > 0")
        if self.min_bs_ue_distance < 0:
            raise ConfigError("min_bs_ue_distance must be >= 0")
        if self.shadowing_std < 0:
            raise ConfigError("shadowing_std must be >= 0")
        if self.csi_error_std < 0:
            raise ConfigError("csi_error_std must be >= 0")


@dataclass(frozen=True)
class SolverParams:
    """Iterative precoder controls."""

    tol: float = 1.0e-4             # relative sum-rate change stopping threshold
    max_iter: int = 200             # inner iteration cap (centralized / per-cell)
    max_iter_outer: int = 50        # distributed outer (barrier) iterations
    max_iter_inner: int = 5         # distributed inner iterations per barrier

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("solver.tol must be > 0")
        if min(self.max_iter, self.max_iter_outer, self.max_iter_inner) < 1:
            raise ConfigError("solver iteration caps must be >= 1")


@dataclass(frozen=True)
class MetricsParams:
    """Coverage / throughput / energy model constants."""

    coverage_threshold_db: float = 0.0
    t_slots: float = 10.0            # slot budget t (precoding compute + transmission)
    compute_capacity: float = 1.0e9  # c [flop/slot]
    p_static: float = 10.0           # static hardware power per active BS [W]
    # absolute per-BS power grid for the EE-vs-SE sweep (raw-gain mode)
    ee_pmax_grid: tuple = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)
    ee_n_drops: int = 10

    def __post_init__(self):
        if self.t_slots < 1:
            raise ConfigError("metrics.t_slots must be >= 1")
        if self.compute_capacity <= 0:
            raise ConfigError("metrics.compute_capacity must be > 0")
        if self.p_static <= 0:
            raise ConfigError("metrics.p_static must be > 0")
        if len(self.ee_pmax_grid) < 3:
            raise ConfigError("metrics.ee_pmax_grid needs >= 3 points")
        if self.ee_n_drops < 1:
            raise ConfigError("metrics.ee_n_drops must be >= 1")


@dataclass(frozen=True)
class SensingParams:
    """Multicarrier echo scene and estimator settings for the sensing subcommand."""

    subcarriers: int = 256
    symbols: int = 64
    subcarrier_spacing: float = 1.2e5   # [Hz]
    carrier_freq: float = 28.0          # [GHz]
    snr_db: float = 20.0
    n_noise_draws: int = 100
    timing_offset: float = 5.0e-7       # receiver timing offset [s]
    cfo: float = 2000.0                 # carrier frequency offset [Hz]
    pad_factor: int = 8                 # zero-padding factor of the 2D periodogram
    # (distance [m], projected velocity [m/s], linear gain); first entry is
    # the LoS reference path and must have the smallest distance
    paths: tuple = ((300.0, 5.0, 1.0), (947.2, 20.0, 0.5))
    reference_path_index: int = 0

    def __post_init__(self):
        if self.subcarriers < 2 or self.symbols < 2:
            raise ConfigError("sensing.subcarriers and sensing.symbols must be >= 2")
        if self.subcarrier_spacing <= 0:
            raise ConfigError("sensing.subcarrier_spacing must be > 0")
        if self.pad_factor < 1:
            raise ConfigError("sensing.pad_factor must be >= 1")
        if len(self.paths) < 1:
            raise ConfigError("sensing.paths must list at least one path")
        object.__setattr__(self, "paths", tuple(tuple(float(v) for v in p) for p in self.paths))
        for p in self.paths:
            if len(p) != 3:
                raise ConfigError("sensing.paths entries must be (distance, velocity, gain)")
            if p[0] <= 0:
                raise ConfigError("sensing.paths distances must be > 0")
        ref = self.reference_path_index
        if not (0 <= ref < len(self.paths)):
            raise ConfigError("sensing.reference_path_index out of range")
        dists = [p[0] for p in self.paths]
        if dists[ref] > min(dists):
            raise ConfigError("sensing.reference_path_index must name the smallest-distance path")


@dataclass(frozen=True)
class Settings:
    """Full run settings: scenario plus solver/metrics/sensing sections."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverParams = field(default_factory=SolverParams)
    metrics: MetricsParams = field(default_factory=MetricsParams)
    sensing: SensingParams = field(default_factory=SensingParams)


_SECTION_TYPES = {
    "scenario": ScenarioConfig,
    "solver": SolverParams,
    "metrics": MetricsParams,
    "sensing": SensingParams,
}


def _coerce(value, type_name: str, field_name: str):
    # PyYAML (YAML 1.1) leaves '1.0e8' (unsigned exponent) as a string, so
    # coerce scalars by the declared field type.
    try:
        if type_name == "int":
            out = int(value)
            if isinstance(value, float) and value != out:
                raise ValueError("non-integer value")
            return out
        if type_name == "float":
            return float(value)
        if type_name == "bool":
            if isinstance(value, bool):
                return value
            raise ValueError("expected a boolean")
        if type_name == "tuple":
            if isinstance(value, (list, tuple)):
                return tuple(value)
            raise ValueError("expected a list")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{field_name}': {exc}") from exc
    return value


def _build_section(cls, data: dict, section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown field '{key}' in {section} section")
    coerced = {k: _coerce(v, str(known[k].type), f"{section}.{k}") for k, v in data.items()}
    try:
        return cls(**coerced)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in {section} section: {exc}") from exc


def load_settings(path) -> Settings:
    """Parse and validate a full YAML settings file."""
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    for key in raw:
        if key not in _SECTION_TYPES:
            raise ConfigError(f"unknown section '{key}'")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        data = raw.get(name, {})
        if not isinstance(data, dict):
            raise ConfigError(f"section '{name}' must be a mapping")
        sections[name] = _build_section(cls, data, name)
    return Settings(**sections)


def load_config(path) -> ScenarioConfig:
    """Parse a settings file and return its validated scenario section."""
    return load_settings(path).scenario


def apply_overrides(settings: Settings, overrides) -> Settings:
    """Apply ``section.key=value`` override strings (values parsed as YAML)."""
    sections = {name: dataclasses.asdict(getattr(settings, name)) for name in _SECTION_TYPES}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form section.key=value")
        key, _, value = item.partition("=")
        if "." not in key:
            raise ConfigError(f"override key '{key}' must be of the form section.key")
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"unknown section '{section}'")
        if name not in sections[section]:
            raise ConfigError(f"unknown field '{name}' in {section} section")
        try:
            sections[section][name] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value '{value}': {exc}") from exc
    built = {name: _build_section(_SECTION_TYPES[name], data, name)
             for name, data in sections.items()}
    return Settings(**built)


def settings_hash(settings: Settings) -> str:
    """Stable sha256 of the full settings, for run manifests."""
    canon = yaml.safe_dump(
        {name: dataclasses.asdict(getattr(settings, name)) for name in _SECTION_TYPES},
        sort_keys=True,
    )
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class Topology:
    """One drop's placement: BSs on a regular grid, UEs uniform over the area."""

    bs_positions: np.ndarray   # (n_bs, 3) [m]
    ue_positions: np.ndarray   # (n_ue, 3) [m]
    grid_shape: tuple          # (rows, cols) of the BS grid

    def __post_init__(self):
        self.bs_positions.setflags(write=False)
        self.ue_positions.setflags(write=False)


def _grid_dims(n_bs: int) -> tuple:
    """Largest rows <= sqrt(n_bs) dividing n_bs (square grid for square counts)."""
    rows = int(math.isqrt(n_bs))
    while n_bs % rows:
        rows -= 1
    return rows, n_bs // rows


def generate_topology(cfg: ScenarioConfig, drop_index: int) -> Topology:
    """Place BSs on the regular grid and draw this drop's uniform UE positions.

    Deterministic given (cfg.seed, drop_index). UEs closer than
    ``min_bs_ue_distance`` (2D) to any BS are redrawn to keep the pathloss
    model in its validity region.
    """
    if not (0 <= drop_index < cfg.n_drops):
        raise ValueError(f"drop_index {drop_index} outside [0, {cfg.n_drops})")
    rows, cols = _grid_dims(cfg.n_bs)
    dx = cfg.area_side / cols
    dy = cfg.area_side / rows
    bs = np.empty((cfg.n_bs, 3))
    for i in range(rows):
        for j in range(cols):
            bs[i * cols + j] = ((j + 0.5) * dx, (i + 0.5) * dy, cfg.bs_height)

    rng = drop_rng(cfg.seed, drop_index, STREAM_PLACEMENT)
    ue = np.empty((cfg.n_ue, 3))
    ue[:, :2] = rng.uniform(0.0, cfg.area_side, size=(cfg.n_ue, 2))
    ue[:, 2] = cfg.ue_height
    for _ in range(1000):
        d2d = np.linalg.norm(ue[:, None, :2] - bs[None, :, :2], axis=2)
        bad = d2d.min(axis=1) < cfg.min_bs_ue_distance
        if not bad.any():
            break
        ue[bad, :2] = rng.uniform(0.0, cfg.area_side, size=(int(bad.sum()), 2))
    else:
        raise ValueError("could not place UEs respecting min_bs_ue_distance")
    return Topology(bs_positions=bs, ue_positions=ue, grid_shape=(rows, cols))


DEFAULT_CONFIG_YAML = """\
# coopmimo settings file. Every key is optional; omitted keys take the
# defaults shown here. Values are YAML scalars/lists.
scenario:
  n_bs: 16                 # base stations (placed on a regular grid)
  nt: 4                    # antennas per BS
  n_ue: 32                 # single-antenna users
  area_side: 400.0         # deployment square side [m]
  carrier_freq: 3.5        # [GHz]
  bandwidth: 1.0e8         # [Hz]
  bs_height: 10.0          # [m]
  ue_height: 1.5           # [m]
  p_max_per_bs: 1.0        # [W]; used directly in raw-gain mode and the EE sweep
  noise_figure: 9.0        # [dB]
  rician_k: 10.0           # Rician K on LOS links [dB]
  rician_k_nlos: 0.0       # Rician K on NLOS links [dB]
  cluster_size_l: 4        # user-centric cluster size
  group_count: 4           # static-scheme BS groups (must divide n_bs)
  snr_sweep: [0, 5, 10, 15, 20, 25, 30]   # transmit SNR points [dB]
  n_drops: 50
  seed: 1
  min_bs_ue_distance: 10.0
  normalize_gains: true    # median large-scale gain normalized to 1 per drop
  shadowing_std: 0.0       # log-normal shadowing [dB]; 0 disables
  csi_error_std: 0.0       # relative CSI error fed to the solver; 0 = perfect CSI
solver:
  tol: 1.0e-4
  max_iter: 200
  max_iter_outer: 50
  max_iter_inner: 5
metrics:
  coverage_threshold_db: 0.0
  t_slots: 10.0
  compute_capacity: 1.0e9  # [flop/slot]
  p_static: 10.0           # [W] per active BS
  ee_pmax_grid: [1.0e-5, 1.0e-4, 1.0e-3, 1.0e-2, 1.0e-1, 1.0, 10.0, 100.0, 1000.0]
  ee_n_drops: 10
sensing:
  subcarriers: 256
  symbols: 64
  subcarrier_spacing: 1.2e5   # [Hz]
  carrier_freq: 28.0          # [GHz]
  snr_db: 20.0
  n_noise_draws: 100
  timing_offset: 5.0e-7       # [s]
  cfo: 2000.0                 # [Hz]
  pad_factor: 8
  paths:                      # [distance m, projected velocity m/s, gain]
    - [300.0, 5.0, 1.0]
    - [947.2, 20.0, 0.5]
  reference_path_index: 0
"""
