"""
Covariance kernel models.

Stationary isotropic kernels evaluated on pairwise distances.
"""

from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

SQRT3 = float(np.sqrt(3.0))


class Matern32Kernel(BaseModel):
    """
    Matérn covariance with ν = 3/2: k(d) = (1 + √3 d / l) exp(-√3 d / l).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["matern32"] = "matern32"
    length_scale: float = Field(..., gt=0.0, description="Length scale l (meters)")

    @property
    def prior_variance(self) -> float:
        return 1.0

    def value(self, d: np.ndarray) -> np.ndarray:
        scaled = SQRT3 * np.asarray(d, dtype=float) / self.length_scale
        return (1.0 + scaled) * np.exp(-scaled)

    def derivative(self, d: np.ndarray) -> np.ndarray:
        """dk/dd = -(3 d / l²) exp(-√3 d / l)."""
        d = np.asarray(d, dtype=float)
        l = self.length_scale
        return -(3.0 * d / (l * l)) * np.exp(-SQRT3 * d / l)


class OuKernel(BaseModel):
    """
    Ornstein-Uhlenbeck covariance k(d) = exp(-α d) / (2α), used unnormalised.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ou"] = "ou"
    alpha_ou: float = Field(..., gt=0.0, description="Decay rate α (inverse input units)")

    @property
    def prior_variance(self) -> float:
        return 1.0 / (2.0 * self.alpha_ou)

    def value(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return np.exp(-self.alpha_ou * d) / (2.0 * self.alpha_ou)


Kernel = Union[Matern32Kernel, OuKernel]
