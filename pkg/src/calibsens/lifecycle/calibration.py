"""Calibration, preferences and configuration files for the life-cycle model."""

import configparser
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "Calibration",
    "Preferences",
    "GAMMA_NAMES",
    "THETA_NAMES",
    "default_income_growth",
    "default_family_shifter",
    "load_config",
    "RunSettings",
]

AGE_START = 26
AGE_END = 65

# calibrated parameters entering the sensitivity analysis, in report order;
# "omega26" is the level exp(log-location) of initial wealth
GAMMA_NAMES = ("sigma_n", "sigma_u", "p", "r", "omega26", "sigma_omega26")
THETA_NAMES = ("beta", "rho")


def default_income_growth():
    """Income growth factors for ages 27..65.

    Artifact data, not a reconstruction: about 3% growth at labour-market
    entry fading linearly to zero in the early fifties and mildly negative
    before retirement.
    """
    ages = np.arange(AGE_START + 1, AGE_END + 1)
    return 1.0 + np.clip(0.03 * (1.0 - (ages - 27) / 25.0), -0.005, None)


def default_family_shifter():
    """Family-composition taste shifter for ages 26..65 (artifact data).

    Rises with household size into the early forties and falls as children
    leave.
    """
    ages = np.arange(AGE_START, AGE_END + 1)
    return np.exp(0.2 * np.exp(-(((ages - 42.0) / 9.0) ** 2)))


@dataclass(frozen=True)
class Preferences:
    beta: float
    rho: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.rho > 0.0 or self.rho == 1.0:
            raise ValueError(f"rho must be positive and different from 1, got {self.rho}")

    @classmethod
    def from_vector(cls, theta):
        return cls(float(theta[0]), float(theta[1]))

    def vector(self):
        return np.array([self.beta, self.rho])


@dataclass(frozen=True)
class Calibration:
    """Fixed parameters of the buffer-stock model plus numerical settings.

    ``omega26`` is the level ``exp(omega_26)`` of the log-normal initial
    wealth location, relative to ``P26``. ``G`` covers ages 27..65 and ``v``
    ages 26..65. The transition into retirement uses ``G_retire`` and a flat
    family shifter. ``borrowing_limit`` is in units of permanent income.
    """

    sigma_n: float = 0.0212
    sigma_u: float = 0.044
    p: float = 0.00302
    omega26: float = 0.061
    sigma_omega26: float = 1.784
    r: float = 0.0344
    gamma0: float = 0.0015
    gamma1: float = 0.071
    G: np.ndarray = field(default_factory=default_income_growth)
    v: np.ndarray = field(default_factory=default_family_shifter)
    P26: float = 1.0
    G_retire: float = 1.0
    age_start: int = AGE_START
    T: int = AGE_END
    death_age: int = 88
    borrowing_limit: float = 0.0
    n_a: int = 300
    a_min: float = 1e-6
    a_max: float = 20.0
    n_quad: int = 5

    def __post_init__(self):
        object.__setattr__(self, "G", np.array(self.G, dtype=float))
        object.__setattr__(self, "v", np.array(self.v, dtype=float))
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")
        if min(self.sigma_n, self.sigma_u, self.sigma_omega26) < 0:
            raise ValueError("standard deviations must be nonnegative")
        if not 0.0 < self.gamma1 < 1.0:
            raise ValueError(f"gamma1 must lie in (0, 1), got {self.gamma1}")
        if self.omega26 <= 0:
            raise ValueError("omega26 is a level and must be positive")
        n_ages = self.T - self.age_start + 1
        if self.G.shape != (n_ages - 1,):
            raise ValueError(f"G needs {n_ages - 1} entries (ages {self.age_start + 1}..{self.T})")
        if self.v.shape != (n_ages,):
            raise ValueError(f"v needs {n_ages} entries (ages {self.age_start}..{self.T})")
        if np.any(self.G <= 0) or np.any(self.v <= 0):
            raise ValueError("G and v must be positive")
        if self.borrowing_limit < 0:
            raise ValueError("borrowing_limit is a nonnegative amount")

    @property
    def ages(self):
        return np.arange(self.age_start, self.T + 1)

    @property
    def n_ages(self):
        return self.T - self.age_start + 1

    @property
    def R(self):
        return 1.0 + self.r

    def gamma_vector(self):
        return np.array([getattr(self, name) for name in GAMMA_NAMES])

    def with_gamma(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (len(GAMMA_NAMES),):
            raise ValueError(f"gamma must have {len(GAMMA_NAMES)} entries")
        return replace(self, **{name: float(x) for name, x in zip(GAMMA_NAMES, gamma)})

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class RunSettings:
    """Estimation and simulation settings read alongside the calibration."""

    beta_true: float = 0.944
    rho_true: float = 1.860
    n_sim: int = 50_000
    n_data: int = 50_000
    seed: int = 20_021
    data_seed: int = 7_919


def _parse_floats(text):
    return [float(x) for x in text.replace("\n", " ").replace(",", " ").split()]


def load_config(path_or_text):
    """Read ``(Calibration, RunSettings)`` from an INI-style file.

    Sections: ``[calibration]`` (scalar fields of ``Calibration``),
    ``[profiles]`` (``G`` and ``v`` as comma or whitespace separated lists),
    ``[estimation]`` (fields of ``RunSettings``). Unknown keys are errors.
    """
    cp = configparser.ConfigParser()
    text = str(path_or_text)
    if "\n" in text or text.lstrip().startswith("["):
        cp.read_string(text)
    else:
        with open(text) as fh:
            cp.read_file(fh)

    # configparser lower-cases keys
    calib_fields = {f.name.lower(): f for f in fields(Calibration) if f.name not in ("G", "v")}
    kwargs = {}
    if cp.has_section("calibration"):
        for key, raw in cp.items("calibration"):
            if key not in calib_fields:
                raise ValueError(f"unknown calibration key {key!r}")
            f = calib_fields[key]
            kwargs[f.name] = int(raw) if f.type is int else float(raw)
    if cp.has_section("profiles"):
        for key, raw in cp.items("profiles"):
            name = {"g": "G", "v": "v"}.get(key.lower())
            if name is None:
                raise ValueError(f"unknown profile {key!r}")
            kwargs[name] = _parse_floats(raw)
    calib = Calibration(**kwargs)

    run_fields = {f.name: f.type for f in fields(RunSettings)}
    run_kwargs = {}
    if cp.has_section("estimation"):
        for key, raw in cp.items("estimation"):
            if key not in run_fields:
                raise ValueError(f"unknown estimation key {key!r}")
            run_kwargs[key] = int(raw) if run_fields[key] is int else float(raw)
    return calib, RunSettings(**run_kwargs)


def dump_config(calib, run=None):
    """Inverse of ``load_config``; returns the file text."""
    run = RunSettings() if run is None else run
    lines = ["[calibration]"]
    for f in fields(Calibration):
        if f.name in ("G", "v"):
            continue
        lines.append(f"{f.name} = {getattr(calib, f.name)!r}")
    lines += ["", "[profiles]"]
    lines.append("G = " + ", ".join(repr(float(x)) for x in calib.G))
    lines.append("v = " + ", ".join(repr(float(x)) for x in calib.v))
    lines += ["", "[estimation]"]
    for f in fields(RunSettings):
        lines.append(f"{f.name} = {getattr(run, f.name)!r}")
    return "\n".join(lines) + "\n"
