from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.transform.vline import ScanGeometry, VLineOperator
from src.transform.weights import exponential_weight

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def small_geom() -> ScanGeometry:
    return ScanGeometry.for_grid(16, 20, 10, exponential_weight(0.5))


@pytest.fixture
def small_op(small_geom) -> VLineOperator:
    return VLineOperator(small_geom, 17)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def write_config(tmp_path):
    """Write a small experiment file; keyword sections replace the defaults."""

    def _write(name: str = "exp.ini", **sections) -> Path:
        base = {
            "grid": {"N": "16"},
            "geometry": {"P": "20", "Q": "10", "weight": "exponential", "mu": "0.5"},
            "phantom": {"kind": "default"},
            "noise": {"delta": "0.0", "seed": "0"},
            "output": {"dir": str(tmp_path / "out"), "formats": "f32,pgm,csv"},
            "checks": {"l_max": "1", "radial_nodes": "50", "abel_nodes": "201", "adjoint_seeds": "5"},
            "solver.TV": {"regularizer": "TV", "alpha": "0.002", "max_iters": "20"},
        }
        for key, value in sections.items():
            section = key.replace("__", ".")
            if value is None:
                base.pop(section, None)
            else:
                base[section] = value

        lines = []
        for section, entries in base.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in entries.items())
            lines.append("")
        path = tmp_path / name
        path.write_text("\n".join(lines))
        return path

    return _write
