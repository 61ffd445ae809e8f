"""Scenario configuration: dataclasses, INI loading and validation.

The file format is INI (``configparser``) with sections ``[machine]``,
``[dtc]``, ``[injection]``, ``[dsp]``, ``[thermal]`` and ``[run]``. Every key
is optional and falls back to the documented default; unknown keys are
rejected so typos do not silently fall back.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dtc_drive import DtcConfig
from .errors import ConfigError, ContractViolation
from .hf_injection import MODES, InjectionConfig
from .machine_model import TWO_PI, MachineParams, fit_lambda_pm
from .thermal import MagnetResistanceTable, TempCoefficients, ThermalPlantParams

CONTROL_PERIOD = 50e-6
SEQUENCES = ("positive", "phase")


@dataclass(frozen=True)
class DspConfig:
    """Phasor pipeline settings.

    ``settle_s`` is the blanking time after each window opens before the
    estimates count towards window summaries. ``decouple`` removes the
    position-dependent EMF from the measured voltage before filtering.
    ``sequence`` selects the analysed signal: ``"positive"`` combines the
    alpha and beta axes into the forward-rotating phasor, ``"phase"`` uses
    phase a alone. ``tap`` writes the raw and bandpassed pipeline inputs to
    a side CSV for debugging.
    """

    bandpass_q: float = 5.0
    lowpass_hz: float = 0.5
    settle_s: float = 6.0
    current_floor_a: float = 1e-3
    decouple: bool = True
    strict_window: bool = False
    sequence: str = "positive"
    tap: bool = False

    def __post_init__(self):
        if not self.bandpass_q > 0:
            raise ConfigError("dsp.bandpass_q must be > 0")
        if not self.lowpass_hz > 0:
            raise ConfigError("dsp.lowpass_hz must be > 0")
        if self.settle_s < 0:
            raise ConfigError("dsp.settle_s must be >= 0")
        if self.current_floor_a < 0:
            raise ConfigError("dsp.current_floor_a must be >= 0")
        if self.sequence not in SEQUENCES:
            raise ConfigError(f"dsp.sequence = {self.sequence!r}: expected one of {', '.join(SEQUENCES)}")


@dataclass(frozen=True)
class ThermalConfig:
    """Plant network, temperature coefficients and loss model.

    ``rotor_loss_w`` is the rotor harmonic loss at rated current and rated
    speed; it scales with the square of current and of speed (thin-plate eddy
    loss). ``eddy_corner_hz`` is the corner of the rotor-frame high-pass that
    separates slip-frequency current from the synchronous current in the
    plant's magnet branch.
    """

    alpha_cu: float = 0.00393
    alpha_mag: float = 0.0012
    T0: float = 25.0
    ambient_c: float = 25.0
    plant: ThermalPlantParams = field(default_factory=lambda: ThermalPlantParams(compression=60.0))
    r_mag0_table: MagnetResistanceTable = field(
        default_factory=lambda: MagnetResistanceTable([600, 900, 1200], [3.0, 4.2, 5.4]))
    rotor_loss_w: float = 60.0
    step_s: float = 0.01
    eddy_corner_hz: float = 1.0

    def __post_init__(self):
        if not (self.alpha_cu > 0 and self.alpha_mag > 0):
            raise ConfigError("thermal.alpha_cu and thermal.alpha_mag must be > 0")
        if self.rotor_loss_w < 0:
            raise ConfigError("thermal.rotor_loss_w must be >= 0")
        if not self.step_s > 0:
            raise ConfigError("thermal.step_s must be > 0")
        if not self.eddy_corner_hz > 0:
            raise ConfigError("thermal.eddy_corner_hz must be > 0")
        if self.step_s > 0.2 * self.plant.max_stable_step():
            raise ConfigError(f"thermal.step_s = {self.step_s} s is too coarse for the compressed network "
                              f"(limit {0.2 * self.plant.max_stable_step():.4g} s)")

    def coefficients(self, R_s0: float, speed_rpm: float) -> TempCoefficients:
        return TempCoefficients(self.alpha_cu, self.alpha_mag, self.T0, R_s0, self.r_mag0_table.at(speed_rpm))


@dataclass(frozen=True)
class RunConfig:
    dt_s: float = 12.5e-6
    duration_s: float = 20.0
    speed_setpoint_rpm: float = 600.0
    load_pct_of_rated: float = 100.0
    seed: int = 1
    log_rate_hz: float = 1000.0
    raw_log: bool = False
    current_noise_a: float = 0.0
    vdc_noise_v: float = 0.0
    initial_angle_deg: float = 0.0

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ConfigError("run.dt_s must be > 0")
        sub = CONTROL_PERIOD / self.dt_s
        if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
            raise ConfigError(f"run.dt_s = {self.dt_s} must divide the {CONTROL_PERIOD} s control period")
        if not (math.isfinite(self.duration_s) and self.duration_s >= 0):
            raise ConfigError("run.duration_s must be >= 0")
        if not self.speed_setpoint_rpm > 0:
            raise ConfigError("run.speed_setpoint_rpm must be > 0")
        if not (0 <= self.load_pct_of_rated <= 200):
            raise ConfigError("run.load_pct_of_rated must be within 0..200")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("run.seed must be a non-negative integer")
        if not (0 < self.log_rate_hz <= 1.0 / CONTROL_PERIOD):
            raise ConfigError("run.log_rate_hz must be within (0, 20000]")
        dec = 1.0 / (CONTROL_PERIOD * self.log_rate_hz)
        if abs(dec - round(dec)) > 1e-9:
            raise ConfigError("run.log_rate_hz must divide 20 kHz")
        if self.current_noise_a < 0 or self.vdc_noise_v < 0:
            raise ConfigError("noise levels must be >= 0")

    @property
    def substeps(self) -> int:
        return int(round(CONTROL_PERIOD / self.dt_s))

    @property
    def decimation(self) -> int:
        return 1 if self.raw_log else int(round(1.0 / (CONTROL_PERIOD * self.log_rate_hz)))


@dataclass(frozen=True)
class ScenarioConfig:
    machine: MachineParams = field(default_factory=MachineParams)
    dtc: DtcConfig = None
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.dtc is None:
            object.__setattr__(self, "dtc", DtcConfig.defaults(self.machine))
        if abs(self.injection.I_rated - self.machine.I_rated) > 1e-12:
            raise ConfigError("injection.I_rated must equal machine.I_rated")

    def with_run(self, **kw) -> "ScenarioConfig":
        return replace(self, run=replace(self.run, **kw))

    def with_injection(self, **kw) -> "ScenarioConfig":
        return replace(self, injection=replace(self.injection, **kw))

    def with_dsp(self, **kw) -> "ScenarioConfig":
        return replace(self, dsp=replace(self.dsp, **kw))

    def with_thermal(self, **kw) -> "ScenarioConfig":
        return replace(self, thermal=replace(self.thermal, **kw))


# ---------------------------------------------------------------------------
# INI loading
# ---------------------------------------------------------------------------

_SCHEMA = {
    "machine": {"R_s": float, "L_d": float, "L_q": float, "lambda_pm": float, "poles": int, "J": float,
                "V_rated": float, "I_rated": float, "rated_rpm": float, "P_rated": float},
    "dtc": {"lambda_ref": float, "flux_band_pct": float, "torque_band_pct": float, "V_dc": float,
            "kp": float, "ki": float, "torque_limit_pct": float, "estimator_corner_hz": float,
            "estimator_clamp_pct": float},
    "injection": {"mode": str, "magnitude_pct": float, "harmonic_order": int, "on_s": float,
                  "period_s": float, "start_s": float, "allow_override": bool},
    "dsp": {"bandpass_q": float, "lowpass_hz": float, "settle_s": float, "current_floor_a": float,
            "decouple": bool, "strict_window": bool, "sequence": str,
            "tap": bool},
    "thermal": {"alpha_cu": float, "alpha_mag": float, "T0": float, "ambient_c": float, "C_s": float,
                "C_r": float, "R_sa": float, "R_rs": float, "R_ra": float, "compression": float,
                "r_mag0_table": str, "rotor_loss_w": float, "step_s": float, "eddy_corner_hz": float},
    "run": {"dt_s": float, "duration_s": float, "speed_setpoint_rpm": float, "load_pct_of_rated": float,
            "seed": int, "log_rate_hz": float, "raw_log": bool, "current_noise_a": float,
            "vdc_noise_v": float, "initial_angle_deg": float},
}

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _convert(section, key, raw, typ):
    where = f"[{section}] {key} = {raw!r}"
    try:
        if typ is bool:
            return _BOOL[raw.strip().lower()]
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return raw.strip()
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: expected {typ.__name__}") from None


def parse_table(text: str) -> MagnetResistanceTable:
    """Parse ``"600:3.0, 900:4.2"`` into a resistance table."""
    try:
        pairs = [p.split(":") for p in text.split(",") if p.strip()]
        speeds = [float(a) for a, _ in pairs]
        values = [float(b) for _, b in pairs]
        return MagnetResistanceTable(speeds, values)
    except (ValueError, ContractViolation) as exc:
        raise ConfigError(f"[thermal] r_mag0_table = {text!r}: {exc or 'expected rpm:ohm pairs'}") from None


def read_sections(text: str, source: str = "<string>") -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        vals = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            vals[key] = _convert(section, key, raw, _SCHEMA[section][key])
        out[section] = vals
    return out


def config_from_sections(sec: dict) -> ScenarioConfig:
    """Build and validate a :class:`ScenarioConfig` from parsed INI sections."""
    try:
        return _build(sec)
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from None


def _build(sec):
    m = dict(sec.get("machine", {}))
    if "rated_rpm" in m:
        m["omega_rated"] = m.pop("rated_rpm") * TWO_PI / 60
    base = MachineParams()
    if "lambda_pm" not in m:
        m["lambda_pm"] = fit_lambda_pm(m.get("P_rated", base.P_rated), m.get("omega_rated", base.omega_rated),
                                       m.get("poles", base.poles), m.get("I_rated", base.I_rated))
    machine = replace(base, **m)

    d = dict(sec.get("dtc", {}))
    lam_ref = d.pop("lambda_ref", math.hypot(machine.lambda_pm, machine.L_q * machine.I_rated))
    T_r = machine.rated_torque
    defaults = DtcConfig.defaults(machine)
    dtc = DtcConfig(
        lambda_ref=lam_ref,
        flux_band=d.pop("flux_band_pct", 2.0) / 100 * lam_ref,
        torque_band=d.pop("torque_band_pct", 4.0) / 100 * T_r,
        V_dc=d.pop("V_dc", defaults.V_dc),
        kp=d.pop("kp", defaults.kp),
        ki=d.pop("ki", defaults.ki),
        torque_limit=d.pop("torque_limit_pct", 200.0) / 100 * T_r,
        estimator_corner_hz=d.pop("estimator_corner_hz", 1.0),
        estimator_clamp=d.pop("estimator_clamp_pct", 120.0) / 100 * lam_ref,
    )

    j = dict(sec.get("injection", {}))
    mode = j.get("mode", "rotating_flux")
    if mode not in MODES:
        raise ConfigError(f"[injection] mode = {mode!r}: expected one of {', '.join(MODES)}")
    injection = InjectionConfig.from_percent(
        j.get("magnitude_pct", 3.0), machine.I_rated, mode=mode, n=j.get("harmonic_order", 5),
        on_duration=j.get("on_s", 15.0), period=j.get("period_s", 600.0), start=j.get("start_s", 0.0),
        allow_override=j.get("allow_override", False))

    dsp = DspConfig(**sec.get("dsp", {}))

    t = dict(sec.get("thermal", {}))
    plant_keys = {f.name for f in fields(ThermalPlantParams)}
    plant = replace(ThermalPlantParams(compression=60.0), **{k: t.pop(k) for k in list(t) if k in plant_keys})
    if "r_mag0_table" in t:
        t["r_mag0_table"] = parse_table(t["r_mag0_table"])
    thermal = ThermalConfig(plant=plant, **t)

    run = RunConfig(**sec.get("run", {}))
    return ScenarioConfig(machine, dtc, injection, dsp, thermal, run)


def load_config(path) -> ScenarioConfig:
    """Read and validate an INI scenario file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return config_from_sections(read_sections(text, str(p)))


def loads_config(text: str) -> ScenarioConfig:
    return config_from_sections(read_sections(text))


def dump_config(cfg: ScenarioConfig) -> str:
    """Effective configuration as INI text; loading it back gives an equivalent config."""
    m, d, j, s, t, r = cfg.machine, cfg.dtc, cfg.injection, cfg.dsp, cfg.thermal, cfg.run
    T_r = m.rated_torque
    sec = {
        "machine": {"R_s": m.R_s, "L_d": m.L_d, "L_q": m.L_q, "lambda_pm": m.lambda_pm, "poles": m.poles,
                    "J": m.J, "V_rated": m.V_rated, "I_rated": m.I_rated,
                    "rated_rpm": m.omega_rated * 60 / TWO_PI, "P_rated": m.P_rated},
        "dtc": {"lambda_ref": d.lambda_ref, "flux_band_pct": 100 * d.flux_band / d.lambda_ref,
                "torque_band_pct": 100 * d.torque_band / T_r, "V_dc": d.V_dc, "kp": d.kp, "ki": d.ki,
                "torque_limit_pct": 100 * d.torque_limit / T_r, "estimator_corner_hz": d.estimator_corner_hz,
                "estimator_clamp_pct": 100 * d.estimator_clamp / d.lambda_ref},
        "injection": {"mode": j.mode, "magnitude_pct": 100 * j.M / j.I_rated, "harmonic_order": j.n,
                      "on_s": j.on_duration, "period_s": j.period, "start_s": j.start,
                      "allow_override": j.allow_override},
        "dsp": {f.name: getattr(s, f.name) for f in fields(s)},
        "thermal": {"alpha_cu": t.alpha_cu, "alpha_mag": t.alpha_mag, "T0": t.T0, "ambient_c": t.ambient_c,
                    **{f.name: getattr(t.plant, f.name) for f in fields(t.plant)},
                    "r_mag0_table": ", ".join(f"{a!r}:{b!r}" for a, b in
                                              zip(t.r_mag0_table.speeds_rpm.tolist(),
                                                  t.r_mag0_table.values_ohm.tolist())),
                    "rotor_loss_w": t.rotor_loss_w, "step_s": t.step_s, "eddy_corner_hz": t.eddy_corner_hz},
        "run": {f.name: getattr(r, f.name) for f in fields(r)},
    }
    lines = []
    for name, vals in sec.items():
        lines.append(f"[{name}]")
        for k, v in vals.items():
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
