"""Ready-made configurations for the standard models."""

from __future__ import annotations

import math

from scipy.special import zeta

from .config import ExperimentConfig, parse_config
from .errors import ConfigError

_ZETA3 = float(zeta(3.0))


def _bose_gas_d3() -> dict:
    # rho_c = (pi/beta)^(3/2) zeta(3/2); sample at twice the critical density
    rho_c = math.pi ** 1.5 * float(zeta(1.5))
    return {
        "model": {"weights": {"kind": "bose"}, "potential": {"kind": "quadratic", "d": 3, "beta": 1.0},
                  "L": 3.0, "rho": 2 * rho_c},
        "experiment": {"kind": "sample", "replicas": 200, "seed": 1},
    }


def _zrp_square() -> dict:
    return {
        "model": {"weights": {"kind": "algebraic", "exponent": -3.0},
                  "potential": {"kind": "square", "d": 1}, "L": 256.0,
                  "rho": [0.8 * _ZETA3, _ZETA3, 1.5, 2.0, 3.0]},
        "experiment": {"kind": "condensation-sweep", "replicas": 500, "seed": 1},
    }


def _ewens_trap_d1() -> dict:
    # rho_c = 2 Gamma(7/3) zeta(4/3) for V = |x|^0.75, theta = 1
    rho_c = 2 * math.gamma(7 / 3) * float(zeta(4 / 3))
    return {
        "model": {"weights": {"kind": "constant", "value": 1.0},
                  "potential": {"kind": "power", "d": 1, "delta": 0.75}, "L": 200.0, "rho": 2 * rho_c},
        "experiment": {"kind": "fluctuation-test", "regime": "gamma-series", "observable": "H0",
                       "replicas": 1000, "seed": 1},
    }


def _becker_doering() -> dict:
    return {
        "model": {"weights": {"kind": "constant", "value": 1.0}, "potential": {"kind": "square", "d": 1},
                  "L": 4.0, "n": 8},
        "experiment": {"kind": "dynamics", "replicas": 4, "seed": 1},
        "dynamics": {"process": "coag-frag", "coagulation": "linear", "horizon": 50.0, "epochs": 50,
                     "initial": "singletons"},
    }


def _permutation_cycles() -> dict:
    # one site, theta = 1: the component sizes are the cycle lengths of a uniform permutation
    return {
        "model": {"weights": {"kind": "constant", "value": 1.0}, "potential": {"kind": "square", "d": 1},
                  "L": 1.0, "n": 50},
        "experiment": {"kind": "sample", "replicas": 1000, "seed": 1, "j_max": 10, "k_max": 1},
    }


PRESETS = {
    "bose-gas-d3": _bose_gas_d3,
    "zrp-square": _zrp_square,
    "ewens-trap-d1": _ewens_trap_d1,
    "becker-doering": _becker_doering,
    "permutation-cycles": _permutation_cycles,
}


def preset(name: str) -> ExperimentConfig:
    try:
        build = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return parse_config(build())
