"""External and basal forcing terms of the momentum balance.

Vectors are arrays with a trailing axis of length 2.  ``ocean_stress`` is
the raw quadratic law ``C_o rho_o |w| w`` of its argument; the momentum
residual passes ``w = v_o - v`` so that ocean drag damps ice motion
relative to the water.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import Params, ScenarioSpec


def _rot(v):
    """k x v for the upward unit vector k: (x, y) -> (-y, x)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _norm(v):
    v = np.asarray(v, dtype=float)
    return np.hypot(v[..., 0], v[..., 1])


def wind_stress(v_a, params: Params) -> np.ndarray:
    v_a = np.asarray(v_a, dtype=float)
    return params.C_a * params.rho_a * _norm(v_a)[..., None] * v_a


def ocean_stress(v, v_o, params: Params) -> np.ndarray:
    """C_o rho_o |v - v_o| (v - v_o)."""
    w = np.asarray(v, dtype=float) - np.asarray(v_o, dtype=float)
    return params.C_o * params.rho_o * _norm(w)[..., None] * w


def coriolis(v, h, params: Params) -> np.ndarray:
    return -params.rho * np.asarray(h, dtype=float)[..., None] * params.C_cor * _rot(v)


def surface_tilt(v_o, params: Params) -> np.ndarray:
    """Tilt acceleration C_cor k x v_o (multiply by rho h for a force density)."""
    return params.C_cor * _rot(v_o)


def basal_weight(h, A, params: Params) -> np.ndarray:
    """(h - h_crit)^+ exp(-alpha_b (1 - A)): the grounding factor of the basal stress."""
    h = np.asarray(h, dtype=float)
    return np.where(h > params.h_crit, h - params.h_crit, 0.0) * np.exp(
        -params.alpha_b * (1.0 - np.asarray(A, dtype=float)))


def basal_stress(v, h, A, params: Params) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    weight = params.k2 * basal_weight(h, A, params)
    return -(weight / (_norm(v) + params.v0))[..., None] * v


@dataclass(frozen=True)
class ForcingInputs:
    wind: tuple[float, float] = (0.0, 0.0)
    ocean_velocity: tuple[float, float] = (0.0, 0.0)
    ocean_drag: bool = True
    coriolis: bool = False
    surface_tilt: bool = False
    basal_stress: bool = True

    @classmethod
    def from_spec(cls, spec: ScenarioSpec) -> "ForcingInputs":
        return cls(wind=spec.wind, ocean_velocity=spec.ocean_velocity,
                   ocean_drag=spec.ocean_drag, coriolis=spec.coriolis,
                   surface_tilt=spec.surface_tilt, basal_stress=spec.basal_stress)
