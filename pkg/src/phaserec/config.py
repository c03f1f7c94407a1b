"""INI-style run configuration: parsing, validation, cross-checks.

One flat file drives every CLI command.  Required keys without defaults
(the law coefficients) produce field-level error messages naming the key.
"""

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .integrator import NewtonConfig, TimeConfig
from .linalg import GmresConfig
from .model import ModelParams
from .reconstruction import (ADAPTIVE_GD, LANDWEBER_FIXED, LANDWEBER_SD,
                             ReconConfig)
from .synthetic import GroundTruthSpec

_MODEL_KEYS = ["M", "ell", "eta", "D", "gamma_h", "gamma_c", "S_h", "S_c",
               "gamma_p", "alpha_h", "alpha_c", "m_ref", "rho", "A",
               "sigma_l", "sigma_r", "c0_sigma", "c1_sigma", "c0_p", "c1_p"]


@dataclass
class RunConfig:
    params: ModelParams
    domain_side: float
    elements: int
    fine_elements: int
    tcfg: TimeConfig
    ncfg: NewtonConfig
    gcfg: GmresConfig
    rcfg: ReconConfig
    truth: GroundTruthSpec
    guess_a: float
    guess_b: float | None
    seed: int
    noise_level: float
    noise_mode: str
    out_dir: str
    dump_stride: int
    snapshot_stride: float
    measurement: str | None      # field file driving a reconstruction
    ref_phi0: str | None         # optional ground-truth fields for metrics
    ref_phiT: str | None
    raw_text: str


def _get(cp, section, key, cast=float, default=None, required=False):
    try:
        if not cp.has_option(section, key):
            if required:
                raise ConfigError(
                    f"missing required key [{section}] {key}", key=f"{section}.{key}")
            return default
        raw = cp.get(section, key)
        if cast is bool:
            return cp.getboolean(section, key)
        return cast(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(
            f"invalid value for [{section}] {key}: {exc}", key=f"{section}.{key}")


def load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            text = fh.read()
        cp.read_string(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}")

    model_kwargs = {}
    for key in _MODEL_KEYS:
        required = key.startswith("c0_") or key.startswith("c1_")
        val = _get(cp, "model", key, float, required=required)
        if val is None:
            raise ConfigError(f"missing required key [model] {key}",
                              key=f"model.{key}")
        model_kwargs[key] = val
    model_kwargs["m_variant"] = _get(cp, "model", "m_variant", str, "pi")
    try:
        params = ModelParams(**model_kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid model parameters: {exc}", key="model")

    domain_side = _get(cp, "mesh", "L_d", float, required=True)
    elements = _get(cp, "mesh", "elements", int, required=True)
    fine_elements = _get(cp, "mesh", "fine_elements", int, default=2 * elements)
    if fine_elements % elements != 0:
        raise ConfigError(
            f"[mesh] fine_elements={fine_elements} is not an integer multiple "
            f"of elements={elements}", key="mesh.fine_elements")

    try:
        tcfg = TimeConfig(dt=_get(cp, "time", "dt", float, 0.1),
                          t_end=_get(cp, "time", "T", float, required=True),
                          rho_inf=_get(cp, "time", "rho_inf", float, 0.5))
    except ValueError as exc:
        raise ConfigError(f"invalid time settings: {exc}", key="time")

    try:
        ncfg = NewtonConfig(tol=_get(cp, "newton", "tol", float, 1e-3),
                            max_newton=_get(cp, "newton", "max_iters", int, 10))
        gcfg = GmresConfig(tol=_get(cp, "gmres", "tol", float, 1e-3),
                           max_iters=_get(cp, "gmres", "max_iters", int, 500),
                           restart=_get(cp, "gmres", "restart", int, None))
    except ValueError as exc:
        raise ConfigError(f"invalid solver settings: {exc}", key="newton/gmres")

    method = _get(cp, "recon", "method", str, LANDWEBER_SD).strip().lower()
    alias = {"landwebersd": LANDWEBER_SD, "landweber_sd": LANDWEBER_SD,
             "sd": LANDWEBER_SD, "adaptivegd": ADAPTIVE_GD,
             "adaptive_gd": ADAPTIVE_GD, "agd": ADAPTIVE_GD,
             "landweber_fixed": LANDWEBER_FIXED, "fixed": LANDWEBER_FIXED}
    if method not in alias:
        raise ConfigError(f"unknown reconstruction method {method!r}",
                          key="recon.method")
    try:
        rcfg = ReconConfig(
            method=alias[method],
            eps_sd=_get(cp, "recon", "eps_sd", float, 1e-4),
            max_iters=_get(cp, "recon", "max_iters", int, 500),
            kappa=(_get(cp, "recon", "kappa1", float, 1.0),
                   _get(cp, "recon", "kappa2", float, 0.0),
                   _get(cp, "recon", "kappa3", float, 0.0)),
            fixed_mu=_get(cp, "recon", "fixed_mu", float, None))
    except ValueError as exc:
        raise ConfigError(f"invalid recon settings: {exc}", key="recon")

    truth = GroundTruthSpec(
        fine_elements_per_side=fine_elements,
        a=_get(cp, "ground_truth", "a", float, 150.0),
        b=_get(cp, "ground_truth", "b", float, 200.0),
        steepness=_get(cp, "ground_truth", "steepness", float, 10.0),
        noise_level=_get(cp, "ground_truth", "noise_level", float, 0.0),
        seed=_get(cp, "ground_truth", "seed", int, 0))

    return RunConfig(
        params=params,
        domain_side=domain_side,
        elements=elements,
        fine_elements=fine_elements,
        tcfg=tcfg, ncfg=ncfg, gcfg=gcfg, rcfg=rcfg, truth=truth,
        guess_a=_get(cp, "guess", "a", float, 100.0),
        guess_b=_get(cp, "guess", "b", float, None),
        seed=_get(cp, "ground_truth", "seed", int, 0),
        noise_level=truth.noise_level,
        noise_mode=_get(cp, "ground_truth", "noise_mode", str, "multiplicative"),
        out_dir=_get(cp, "output", "dir", str, "out"),
        dump_stride=_get(cp, "output", "dump_stride", int, 0),
        snapshot_stride=_get(cp, "output", "snapshot_stride", float, 0.0),
        measurement=_get(cp, "recon", "measurement", str, None),
        ref_phi0=_get(cp, "recon", "ref_phi0", str, None),
        ref_phiT=_get(cp, "recon", "ref_phiT", str, None),
        raw_text=text)
