"""Arrhenius thermal-damage accumulation and binary lesion classification.

Damage is the time integral of A*exp(-E_a / (R * T_K)) evaluated with a
rectangle rule at the FDTD time step; a voxel is classified necrotic once the
integral strictly exceeds the threshold (1.0 by default). Temperatures are
supplied in degrees Celsius and converted to Kelvin inside the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import LabelVolume, ScalarVolume

KELVIN_OFFSET = 273.15

# exp() underflows to subnormal/zero well above this; clamping keeps the
# increment an exact 0 instead of tripping FP underflow traps
_EXP_FLOOR = -700.0


@dataclass(frozen=True)
class ArrheniusParams:
    """First-order damage kinetics constants."""

    a: float = 1.18e44        # frequency factor, 1/s
    e_a: float = 3.02e5       # activation energy, J/mol
    r: float = 8.3134         # universal gas constant, J/mol/K
    threshold: float = 1.0    # lesion classification threshold on the integral

    def __post_init__(self):
        if self.a <= 0 or self.e_a <= 0 or self.r <= 0:
            raise ValueError("a, e_a and r must be strictly positive")

    def rate(self, t_celsius) -> np.ndarray:
        """Damage rate (1/s) at temperature(s) in degC; exactly 0 at/below 0 K.

        Exponents below -700 contribute an exact 0 instead of a subnormal.
        """
        t_k = np.asarray(t_celsius, dtype=np.float64) + KELVIN_OFFSET
        neg_ea_r = -self.e_a / self.r
        if float(t_k.min()) > 0.0:
            expo = neg_ea_r / t_k
            live = expo > _EXP_FLOOR
            out = np.exp(expo, out=expo)
            out *= self.a
            out *= live
            return out
        with np.errstate(divide="ignore"):
            expo = np.where(t_k > 0.0, neg_ea_r / np.maximum(t_k, 1e-300), -np.inf)
        live = expo > _EXP_FLOOR
        out = self.a * np.exp(np.maximum(expo, _EXP_FLOOR))
        out *= live
        return out

    def to_dict(self) -> dict:
        return {"a": self.a, "e_a": self.e_a, "r": self.r, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "ArrheniusParams":
        return cls(**d)


def accumulate_array(
    psi: np.ndarray, t_celsius: np.ndarray, dt: float, params: ArrheniusParams
) -> np.ndarray:
    """psi + dt * rate(T), as plain arrays (hot-loop form used by the simulator)."""
    if dt < 0:
        raise ValueError("invalid dt")
    return psi + dt * params.rate(t_celsius)


def accumulate(
    psi: ScalarVolume, t: ScalarVolume, dt: float, params: ArrheniusParams
) -> ScalarVolume:
    """One rectangle-rule damage increment from the temperature field."""
    if psi.spec != t.spec:
        raise ValueError("grid mismatch")
    if np.any(psi.data < 0):
        raise ValueError("psi must be >= 0")
    t.require_finite("temperature")
    return ScalarVolume(psi.spec, accumulate_array(psi.data, t.data, dt, params))


def classify(psi: ScalarVolume, params: ArrheniusParams) -> LabelVolume:
    """Binary lesion mask: damage strictly greater than the threshold."""
    if np.any(psi.data < 0):
        raise ValueError("psi must be >= 0")
    return LabelVolume(psi.spec, (psi.data > params.threshold).astype(np.uint8))
