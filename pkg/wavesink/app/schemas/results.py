from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel


class ComplexMatrix(BaseModel):
    re: List[List[float]]
    im: List[List[float]]

    @classmethod
    def from_array(cls, value) -> "ComplexMatrix":
        value = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(re=value.real.tolist(), im=value.imag.tolist())

    def to_array(self) -> np.ndarray:
        return np.asarray(self.re) + 1j * np.asarray(self.im)


class ScatteringRecord(BaseModel):
    eta: float
    lam: float
    J: int
    S: ComplexMatrix
    B: ComplexMatrix
    transmission: Dict[str, ComplexMatrix] = {}
    energy_residual: float
    symmetry_defect: float
    inclusion_l2_norms: List[float]
    eigenvalue_moduli: List[float]
    n_dofs: int
    layer_unresolved: bool = False


class SmallEtaRecord(BaseModel):
    lam: float
    S0: ComplexMatrix
    B0: ComplexMatrix


class LargeEtaRecord(BaseModel):
    lam: float
    S_inf: ComplexMatrix
    E: ComplexMatrix
    S_prime: ComplexMatrix
    prefactor_defect: float


class RateRow(BaseModel):
    eta: float
    defect0: float
    defect1: float
    interior_l2: float


class RateStudyReport(BaseModel):
    lam: float
    rows: List[RateRow]
    slope_defect0: Optional[float] = None
    slope_defect1: Optional[float] = None
    slope_interior: Optional[float] = None


class HalfGuideRecord(BaseModel):
    L: float
    lam: float
    r: ComplexMatrix
    R: ComplexMatrix
    reflection: ComplexMatrix
    transmission: ComplexMatrix


class LSample(BaseModel):
    L: float
    R: ComplexMatrix


class AbsorberReport(BaseModel):
    lam: float
    eta: float
    S_eta: ComplexMatrix
    alpha: float
    beta: float
    sigma: float
    kappa: int
    k_offset: int
    separation_bound: float
    ligament_width: Optional[float] = None
    samples: List[LSample]
    best_L: Optional[float] = None
    best_abs_R: Optional[float] = None
    dip_width: Optional[float] = None
