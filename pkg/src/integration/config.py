import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from src.errors import ConfigError, VLineError
from src.imaging.phantom import PhantomSpec, default_spec, disc_spec
from src.solver.chambolle_pock import SolverConfig, as_regularizer, scale_alpha
from src.transform.vline import ScanGeometry
from src.transform.weights import WeightSpec, weight_from_label
from src.utils.formats import FORMATS

logger = logging.getLogger(__name__)

# =========================
# LOAD ENV VARIABLES
# =========================
load_dotenv()

PHANTOM_KINDS = ("default", "disc", "empty")
TRUTH_MODES = ("phantom", "none")

# consumers of the experiment seed, in spawn order
SEED_CONSUMERS = ("noise", "opnorm", "test_vectors")


# =========================
# DATA STRUCTURE
# =========================

@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 256
    P: int = 200
    Q: int = 150
    weight_kind: str = "exponential"
    mu: float = 0.5
    phantom_kind: str = "default"
    disc_radius: float = 0.5
    amplitude: float = 1.0
    support_margin: float = 0.95
    delta: float = 0.0
    seed: int = 0
    solvers: Tuple[SolverConfig, ...] = field(default_factory=tuple)
    out_dir: Path = Path("results")
    formats: Tuple[str, ...] = FORMATS
    truth: str = "phantom"
    sinogram: Optional[Path] = None
    n_jobs: int = 1
    deterministic: bool = False
    l_max: int = 3
    radial_nodes: int = 400
    abel_nodes: int = 2001
    psi_cut: float = 0.1
    adjoint_seeds: int = 20
    source: Optional[Path] = None

    def validate(self) -> "ExperimentConfig":
        for name in ("N", "P", "Q"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.N < 2:
            raise ConfigError("N must be at least 2")
        if not self.solvers:
            raise ConfigError("no [solver.NAME] section configured; the methods list must be non-empty")
        if self.phantom_kind not in PHANTOM_KINDS:
            raise ConfigError(f"phantom kind {self.phantom_kind!r} not in {PHANTOM_KINDS}")
        if self.truth not in TRUTH_MODES:
            raise ConfigError(f"truth {self.truth!r} not in {TRUTH_MODES}")
        if self.delta < 0:
            raise ConfigError("noise delta must be non-negative")
        unknown = [fmt for fmt in self.formats if fmt not in FORMATS]
        if unknown:
            raise ConfigError(f"unknown output formats {unknown}; choose from {FORMATS}")
        if self.l_max < 0 or self.radial_nodes < 2 or self.adjoint_seeds < 1:
            raise ConfigError("l_max, radial_nodes and adjoint_seeds are out of range")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"solver names must be unique, got {labels}")
        try:
            self.weight().check_nonnegative()
            self.phantom_spec().validate()
        except VLineError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -------------------------
    # Derived objects
    # -------------------------
    def weight(self) -> WeightSpec:
        return weight_from_label(self.weight_kind, self.mu)

    def geometry(self) -> ScanGeometry:
        return ScanGeometry.for_grid(self.N, self.P, self.Q, self.weight())

    def phantom_spec(self) -> PhantomSpec:
        if self.phantom_kind == "empty":
            return PhantomSpec(support_margin=self.support_margin)
        if self.phantom_kind == "disc":
            return replace(disc_spec(self.disc_radius, self.amplitude), support_margin=self.support_margin)
        return replace(default_spec(), support_margin=self.support_margin)

    def seed_for(self, consumer: str) -> int:
        """Deterministic per-consumer seed split from the experiment seed."""
        children = np.random.SeedSequence(self.seed).spawn(len(SEED_CONSUMERS))
        return int(children[SEED_CONSUMERS.index(consumer)].generate_state(1)[0])


# =========================
# PARSING
# =========================

def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"))


def _solver_from_section(name: str, section, cfg_seed: int, N: int, P: int, Q: int) -> SolverConfig:
    regularizer = as_regularizer(section.get("regularizer", name))

    alpha = section.getfloat("alpha", fallback=0.0)
    scaled = section.getboolean("scale_alpha", fallback=False)
    if scaled:
        alpha = scale_alpha(alpha, regularizer, N, P, Q)

    tol = section.get("tol", fallback="").strip()
    return SolverConfig(
        regularizer=regularizer,
        alpha=alpha,
        positivity=section.getboolean("positivity", fallback=False),
        max_iters=section.getint("max_iters", fallback=700),
        theta=section.getfloat("theta", fallback=1.0),
        norm_safety=section.getfloat("norm_safety", fallback=1.01),
        opnorm_iters=section.getint("opnorm_iters", fallback=100),
        seed=cfg_seed,
        log_every=section.getint("log_every", fallback=10),
        tol=float(tol) if tol else None,
        progress=section.getboolean("progress", fallback=False),
        name=name,
    )


def load_config(
    path,
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
    deterministic: Optional[bool] = None,
) -> ExperimentConfig:
    """
    Read an experiment file. Precedence: explicit arguments (command line)
    over VLT_* environment variables over the file over defaults.
    """
    path = Path(path)
    parser = _parser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    try:
        grid = parser["grid"] if parser.has_section("grid") else {}
        N = int(grid.get("N", 256))
        geometry = parser["geometry"] if parser.has_section("geometry") else parser["DEFAULT"]
        P = geometry.getint("P", fallback=200)
        Q = geometry.getint("Q", fallback=150)

        phantom = parser["phantom"] if parser.has_section("phantom") else parser["DEFAULT"]
        noise = parser["noise"] if parser.has_section("noise") else parser["DEFAULT"]
        output = parser["output"] if parser.has_section("output") else parser["DEFAULT"]
        checks = parser["checks"] if parser.has_section("checks") else parser["DEFAULT"]

        file_seed = noise.getint("seed", fallback=0)
        seed = seed if seed is not None else file_seed
        opnorm_seed = ExperimentConfig(seed=seed).seed_for("opnorm")

        solvers = tuple(
            _solver_from_section(name.split(".", 1)[1], parser[name], opnorm_seed, N, P, Q)
            for name in parser.sections()
            if name.startswith("solver.")
        )

        if not deterministic:
            env_det = os.getenv("VLT_DETERMINISTIC")
            if env_det is not None:
                deterministic = env_det.strip().lower() in ("1", "true", "yes", "on")
            else:
                deterministic = output.getboolean("deterministic", fallback=False)

        resolved_out = out_dir or os.getenv("VLT_OUT_DIR") or output.get("dir", fallback="results")
        n_jobs = int(os.getenv("VLT_N_JOBS", geometry.get("n_jobs", fallback="1")))
        if deterministic:
            n_jobs = 1

        sinogram = output.get("sinogram", fallback="").strip()
        formats = tuple(f.strip() for f in output.get("formats", fallback=",".join(FORMATS)).split(",") if f.strip())

        cfg = ExperimentConfig(
            N=N,
            P=P,
            Q=Q,
            weight_kind=geometry.get("weight", fallback="exponential"),
            mu=geometry.getfloat("mu", fallback=0.5),
            phantom_kind=phantom.get("kind", fallback="default"),
            disc_radius=phantom.getfloat("radius", fallback=0.5),
            amplitude=phantom.getfloat("amplitude", fallback=1.0),
            support_margin=phantom.getfloat("support_margin", fallback=0.95),
            delta=noise.getfloat("delta", fallback=0.0),
            seed=seed,
            solvers=solvers,
            out_dir=Path(resolved_out),
            formats=formats,
            truth=output.get("truth", fallback="phantom"),
            sinogram=Path(sinogram) if sinogram else None,
            n_jobs=n_jobs,
            deterministic=bool(deterministic),
            l_max=checks.getint("l_max", fallback=3),
            radial_nodes=checks.getint("radial_nodes", fallback=400),
            abel_nodes=checks.getint("abel_nodes", fallback=2001),
            psi_cut=checks.getfloat("psi_cut", fallback=0.1),
            adjoint_seeds=checks.getint("adjoint_seeds", fallback=20),
            source=path,
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, VLineError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc

    return cfg.validate()


# =========================
# EFFECTIVE CONFIG ECHO
# =========================

def to_parser(cfg: ExperimentConfig) -> configparser.ConfigParser:
    """Every resolved value, so the file alone reproduces the run."""
    parser = _parser()
    parser.optionxform = str
    parser["grid"] = {"N": str(cfg.N)}
    parser["geometry"] = {
        "P": str(cfg.P),
        "Q": str(cfg.Q),
        "weight": cfg.weight_kind,
        "mu": repr(cfg.mu),
        "n_jobs": str(cfg.n_jobs),
    }
    parser["phantom"] = {
        "kind": cfg.phantom_kind,
        "radius": repr(cfg.disc_radius),
        "amplitude": repr(cfg.amplitude),
        "support_margin": repr(cfg.support_margin),
    }
    parser["noise"] = {"delta": repr(cfg.delta), "seed": str(cfg.seed)}
    parser["output"] = {
        "dir": str(cfg.out_dir),
        "formats": ",".join(cfg.formats),
        "truth": cfg.truth,
        "sinogram": str(cfg.sinogram) if cfg.sinogram else "",
        "deterministic": str(cfg.deterministic).lower(),
    }
    parser["checks"] = {
        "l_max": str(cfg.l_max),
        "radial_nodes": str(cfg.radial_nodes),
        "abel_nodes": str(cfg.abel_nodes),
        "psi_cut": repr(cfg.psi_cut),
        "adjoint_seeds": str(cfg.adjoint_seeds),
    }
    for solver in cfg.solvers:
        parser[f"solver.{solver.label}"] = {
            "regularizer": solver.regularizer.value,
            "alpha": repr(solver.alpha),
            "scale_alpha": "false",
            "positivity": str(solver.positivity).lower(),
            "max_iters": str(solver.max_iters),
            "theta": repr(solver.theta),
            "norm_safety": repr(solver.norm_safety),
            "opnorm_iters": str(solver.opnorm_iters),
            "log_every": str(solver.log_every),
            "tol": "" if solver.tol is None else repr(solver.tol),
            "progress": str(solver.progress).lower(),
        }
    return parser


def write_effective_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        to_parser(cfg).write(fh)
    return path
