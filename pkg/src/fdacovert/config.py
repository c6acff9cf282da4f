"""Experiment configuration: flat sectioned key-value files, CLI overrides.

All units ride in the key names (_hz, _m, _dbm, _deg); angles are degrees in
config and radians internally; dBm powers convert to watts once, at parse
time.  Defaults reproduce the reference experiment set-up except the grid
step (0.05 m desk default instead of 0.01 m).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import radians
from typing import Dict, List, Optional, Tuple

from .channel import SCHEMES, LinkBudget, dbm_to_watts
from .covertness import CovertnessBudget
from .ellipse import OptimizerConfig
from .fieldmap import GridSpec
from .geometry import ArrayGeometry, DomainError, PolarPoint


class ConfigError(ValueError):
    """Invalid configuration file, key or value."""


# (section, key) -> (expected type tag, default as config text)
_SCHEMA: Dict[Tuple[str, str], Tuple[str, str]] = {
    ("geometry", "n_antennas"): ("int", "64"),
    ("geometry", "carrier_hz"): ("float", "3e9"),
    ("geometry", "spacing_m"): ("optfloat", ""),
    ("plan", "scheme"): ("str", "RandomFDA"),
    ("plan", "f_delta_hz"): ("float", "1e6"),
    ("plan", "seed"): ("int", "0"),
    ("plan", "box_half_width_hz"): ("optfloat", ""),
    ("bob", "r_m"): ("float", "7.0711"),
    ("bob", "theta_deg"): ("float", "45"),
    ("budget", "p_t_dbm"): ("float", "20"),
    ("budget", "sigma_b_dbm"): ("float", "-60"),
    ("budget", "sigma_w_dbm"): ("float", "-60"),
    ("budget", "epsilon"): ("float", "1.0"),
    ("budget", "blocklength"): ("int", "100"),
    ("budget", "delta_fep"): ("float", "1e-5"),
    ("grid", "x_min_m"): ("float", "0"),
    ("grid", "x_max_m"): ("float", "40"),
    ("grid", "y_min_m"): ("float", "0"),
    ("grid", "y_max_m"): ("float", "40"),
    ("grid", "step_m"): ("float", "0.05"),
    ("grid", "max_cells"): ("int", "10000000"),
    ("threshold", "mode"): ("str", "fraction"),
    ("threshold", "value"): ("float", "0.1"),
    ("sweep", "schemes"): ("strlist", "LPA,LinearFDA,RandomFDA,OptimizedFDA"),
    ("sweep", "n_values"): ("intlist", "16,32,64"),
    ("sweep", "f_delta_values_hz"): ("floatlist", "0.25e6,0.5e6,1e6,2e6"),
    ("sweep", "seeds"): ("intlist", "0,1,2,3,4,5,6,7,8,9"),
    ("mc", "n_samples"): ("int", "100000"),
    ("mc", "seed"): ("int", "2025"),
}


def _coerce(tag: str, text: str, where: str):
    try:
        if tag == "int":
            return int(text)
        if tag == "float":
            return float(text)
        if tag == "optfloat":
            return float(text) if text.strip() else None
        if tag == "str":
            return text.strip()
        if tag == "strlist":
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if tag == "intlist":
            return tuple(int(s) for s in text.split(",") if s.strip())
        if tag == "floatlist":
            return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {tag}") from exc
    raise ConfigError(f"{where}: unknown schema tag {tag}")


def parse_config_text(text: str, source: str = "<config>") -> Dict[Tuple[str, str], Tuple[str, str]]:
    """Parse sectioned key=value text into {(section, key): (value, where)}."""
    entries: Dict[Tuple[str, str], Tuple[str, str]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        where = f"{source}, line {lineno}"
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{where}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, value = line.split("=", 1)
        sk = (section, key.strip())
        if sk not in _SCHEMA:
            raise ConfigError(f"{where}: unknown option {section}.{key.strip()}")
        entries[sk] = (value.strip(), where)
    return entries


def parse_overrides(pairs: List[str]) -> Dict[Tuple[str, str], Tuple[str, str]]:
    """Parse repeated --set section.key=value flags."""
    entries = {}
    for pair in pairs:
        where = f"--set {pair!r}"
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"{where}: expected section.key=value")
        dotted, value = pair.split("=", 1)
        section, key = dotted.split(".", 1)
        sk = (section.strip(), key.strip())
        if sk not in _SCHEMA:
            raise ConfigError(f"{where}: unknown option {sk[0]}.{sk[1]}")
        entries[sk] = (value.strip(), where)
    return entries


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved experiment settings."""

    n_antennas: int
    carrier_hz: float
    spacing_m: Optional[float]
    scheme: str
    f_delta_hz: float
    seed: int
    box_half_width_hz: Optional[float]
    bob_r_m: float
    bob_theta_deg: float
    p_t_dbm: float
    sigma_b_dbm: float
    sigma_w_dbm: float
    epsilon: float
    blocklength: int
    delta_fep: float
    x_min_m: float
    x_max_m: float
    y_min_m: float
    y_max_m: float
    step_m: float
    max_cells: int
    threshold_mode: str
    threshold_value: float
    sweep_schemes: tuple
    sweep_n_values: tuple
    sweep_f_delta_values_hz: tuple
    sweep_seeds: tuple
    mc_n_samples: int
    mc_seed: int

    def geometry(self, n_antennas: Optional[int] = None) -> ArrayGeometry:
        return ArrayGeometry(
            n_antennas=n_antennas or self.n_antennas,
            carrier_hz=self.carrier_hz,
            spacing_m=self.spacing_m or 0.0,
        )

    def bob(self) -> PolarPoint:
        return PolarPoint(self.bob_r_m, radians(self.bob_theta_deg))

    def link_budget(self) -> LinkBudget:
        return LinkBudget(
            transmit_power_w=dbm_to_watts(self.p_t_dbm),
            noise_bob_w=dbm_to_watts(self.sigma_b_dbm),
            noise_willie_w=dbm_to_watts(self.sigma_w_dbm),
            blocklength=self.blocklength,
            frame_error_prob=self.delta_fep,
        )

    def covertness_budget(self) -> CovertnessBudget:
        return CovertnessBudget(
            epsilon=self.epsilon,
            blocklength=self.blocklength,
            noise_willie_w=dbm_to_watts(self.sigma_w_dbm),
            transmit_power_w=dbm_to_watts(self.p_t_dbm),
        )

    def grid(self) -> GridSpec:
        return GridSpec(
            x_min_m=self.x_min_m,
            x_max_m=self.x_max_m,
            y_min_m=self.y_min_m,
            y_max_m=self.y_max_m,
            step_m=self.step_m,
            max_cells=self.max_cells,
        )

    def solver(self) -> OptimizerConfig:
        return OptimizerConfig(seed=self.seed)

    def effective_threshold(self) -> Tuple[str, float]:
        """(mode, value) with the kl mode's q derived from the budget."""
        if self.threshold_mode == "fraction":
            return "fraction", self.threshold_value
        return "kl", self.covertness_budget().threshold_q

    def describe(self) -> List[str]:
        """Canonical section.key=value lines of the resolved config."""
        values = {
            ("geometry", "n_antennas"): self.n_antennas,
            ("geometry", "carrier_hz"): self.carrier_hz,
            ("geometry", "spacing_m"): self.spacing_m,
            ("plan", "scheme"): self.scheme,
            ("plan", "f_delta_hz"): self.f_delta_hz,
            ("plan", "seed"): self.seed,
            ("plan", "box_half_width_hz"): self.box_half_width_hz,
            ("bob", "r_m"): self.bob_r_m,
            ("bob", "theta_deg"): self.bob_theta_deg,
            ("budget", "p_t_dbm"): self.p_t_dbm,
            ("budget", "sigma_b_dbm"): self.sigma_b_dbm,
            ("budget", "sigma_w_dbm"): self.sigma_w_dbm,
            ("budget", "epsilon"): self.epsilon,
            ("budget", "blocklength"): self.blocklength,
            ("budget", "delta_fep"): self.delta_fep,
            ("grid", "x_min_m"): self.x_min_m,
            ("grid", "x_max_m"): self.x_max_m,
            ("grid", "y_min_m"): self.y_min_m,
            ("grid", "y_max_m"): self.y_max_m,
            ("grid", "step_m"): self.step_m,
            ("grid", "max_cells"): self.max_cells,
            ("threshold", "mode"): self.threshold_mode,
            ("threshold", "value"): self.threshold_value,
            ("sweep", "schemes"): ",".join(self.sweep_schemes),
            ("sweep", "n_values"): ",".join(str(v) for v in self.sweep_n_values),
            ("sweep", "f_delta_values_hz"): ",".join(
                repr(v) for v in self.sweep_f_delta_values_hz
            ),
            ("sweep", "seeds"): ",".join(str(s) for s in self.sweep_seeds),
            ("mc", "n_samples"): self.mc_n_samples,
            ("mc", "seed"): self.mc_seed,
        }
        return [f"{s}.{k}={values[(s, k)]}" for s, k in sorted(values)]

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.describe()).encode()).hexdigest()


def build_config(
    file_text: Optional[str] = None,
    source: str = "<config>",
    overrides: Optional[List[str]] = None,
) -> ExperimentConfig:
    """Merge defaults, an optional config file and --set overrides."""
    merged: Dict[Tuple[str, str], Tuple[str, str]] = {
        sk: (default, "<default>") for sk, (_, default) in _SCHEMA.items()
    }
    if file_text is not None:
        merged.update(parse_config_text(file_text, source))
    if overrides:
        merged.update(parse_overrides(overrides))

    vals = {}
    for sk, (tag, _) in _SCHEMA.items():
        text, where = merged[sk]
        vals[sk] = (_coerce(tag, text, where), where)

    def v(section, key):
        return vals[(section, key)][0]

    def where(section, key):
        return vals[(section, key)][1]

    cfg = ExperimentConfig(
        n_antennas=v("geometry", "n_antennas"),
        carrier_hz=v("geometry", "carrier_hz"),
        spacing_m=v("geometry", "spacing_m"),
        scheme=v("plan", "scheme"),
        f_delta_hz=v("plan", "f_delta_hz"),
        seed=v("plan", "seed"),
        box_half_width_hz=v("plan", "box_half_width_hz"),
        bob_r_m=v("bob", "r_m"),
        bob_theta_deg=v("bob", "theta_deg"),
        p_t_dbm=v("budget", "p_t_dbm"),
        sigma_b_dbm=v("budget", "sigma_b_dbm"),
        sigma_w_dbm=v("budget", "sigma_w_dbm"),
        epsilon=v("budget", "epsilon"),
        blocklength=v("budget", "blocklength"),
        delta_fep=v("budget", "delta_fep"),
        x_min_m=v("grid", "x_min_m"),
        x_max_m=v("grid", "x_max_m"),
        y_min_m=v("grid", "y_min_m"),
        y_max_m=v("grid", "y_max_m"),
        step_m=v("grid", "step_m"),
        max_cells=v("grid", "max_cells"),
        threshold_mode=v("threshold", "mode"),
        threshold_value=v("threshold", "value"),
        sweep_schemes=v("sweep", "schemes"),
        sweep_n_values=v("sweep", "n_values"),
        sweep_f_delta_values_hz=v("sweep", "f_delta_values_hz"),
        sweep_seeds=v("sweep", "seeds"),
        mc_n_samples=v("mc", "n_samples"),
        mc_seed=v("mc", "seed"),
    )

    # semantic validation with the offending location attached
    if cfg.scheme not in SCHEMES:
        raise ConfigError(
            f"{where('plan', 'scheme')}: unknown scheme {cfg.scheme!r}"
        )
    for s in cfg.sweep_schemes:
        if s not in SCHEMES:
            raise ConfigError(f"{where('sweep', 'schemes')}: unknown scheme {s!r}")
    if cfg.threshold_mode not in ("fraction", "kl"):
        raise ConfigError(
            f"{where('threshold', 'mode')}: mode must be 'fraction' or 'kl'"
        )
    if cfg.threshold_mode == "fraction" and not 0.0 < cfg.threshold_value <= 1.0:
        raise ConfigError(
            f"{where('threshold', 'value')}: fraction must lie in (0, 1]"
        )
    if not -90.0 < cfg.bob_theta_deg < 90.0:
        raise ConfigError(
            f"{where('bob', 'theta_deg')}: angle must lie strictly inside (-90, 90)"
        )
    try:
        cfg.geometry()
        cfg.bob()
        cfg.link_budget()
        cfg.grid()
        cfg.covertness_budget()
    except DomainError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path: Optional[str], overrides: Optional[List[str]] = None) -> ExperimentConfig:
    if path is None:
        return build_config(None, overrides=overrides)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return build_config(text, source=path, overrides=overrides)
