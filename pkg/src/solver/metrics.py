from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DomainError
from src.imaging.grid import ImageGrid
from src.transform.vline import ScanGeometry, Sinogram, forward

LOG_COLUMNS = ["iter", "E2", "R2", "seconds"]

# =========================
# DATA STRUCTURES
# =========================

@dataclass
class IterateRecord:
    k: int
    e2: float
    r2: float
    seconds: float
    objective: Optional[float] = None


@dataclass
class IterateLog:
    """Per-iteration relative squared error E2 and residual R2 of one solver run."""
    label: str = ""
    has_truth: bool = False
    records: List[IterateRecord] = field(default_factory=list)

    def append(self, record: IterateRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def e2_curve(self) -> np.ndarray:
        return np.array([r.e2 for r in self.records])

    def r2_curve(self) -> np.ndarray:
        return np.array([r.r2 for r in self.records])

    def objective_curve(self) -> np.ndarray:
        return np.array([r.objective for r in self.records if r.objective is not None])

    def final(self) -> IterateRecord:
        return self.records[-1]

    def min_e2(self) -> float:
        if not self.has_truth or not self.records:
            return float("nan")
        return float(np.min(self.e2_curve()))

    def to_frame(self, wall_time: bool = True) -> pd.DataFrame:
        """E2 is left empty without a ground truth; seconds when wall_time is off."""
        return pd.DataFrame(
            [
                (r.k, r.e2 if self.has_truth else np.nan, r.r2, r.seconds if wall_time else np.nan)
                for r in self.records
            ],
            columns=LOG_COLUMNS,
        )

    def to_csv(self, path, wall_time: bool = True):
        self.to_frame(wall_time).to_csv(path, index=False, na_rep="", float_format="%.10e")


# =========================
# ERROR METRICS
# =========================

def relative_error(values: np.ndarray, truth: np.ndarray) -> float:
    denom = float(np.sum(truth ** 2))
    if denom == 0.0:
        raise DomainError("relative error against a zero ground truth")
    return float(np.sum((values - truth) ** 2)) / denom


def relative_residual(cf: np.ndarray, g: np.ndarray) -> float:
    denom = float(np.sum(g ** 2))
    if denom == 0.0:
        raise DomainError("relative residual against zero data")
    return float(np.sum((cf - g) ** 2)) / denom


def error_metrics(f_j: ImageGrid, truth: ImageGrid, g_ref: Sinogram, geom: ScanGeometry) -> Tuple[float, float]:
    """(E2, R2) with E2 = |f_j - f|^2/|f|^2 and R2 = |C f_j - g|^2/|g|^2."""
    e2 = relative_error(f_j.values, truth.values)
    r2 = relative_residual(forward(f_j, geom).values, g_ref.values)
    return e2, r2
