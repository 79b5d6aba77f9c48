import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import DivergenceError, FormatError, VLineError
from src.imaging.phantom import add_noise, make_phantom
from src.integration.config import ExperimentConfig, load_config, write_effective_config
from src.solver.chambolle_pock import chambolle_pock
from src.spectral.abel import AbelKernelContext, abel_apply, uniqueness_margin
from src.spectral.harmonics import COSINE, SINE, image_coeffs, sino_coeffs
from src.transform.opnorm import dot_product_test
from src.transform.vline import VLineOperator, operator_for
from src.utils.formats import load_sinogram, save_image, save_sinogram
from src.utils.logger import level_from_verbosity, setup_logging
from src.utils.results_store import ResultsStore

logger = logging.getLogger(__name__)

# ===============================
# COMMAND CONSTANTS
# ===============================

PHANTOM = "phantom"
FORWARD = "forward"
RECONSTRUCT = "reconstruct"
ADJOINT_TEST = "adjoint-test"
VERIFY_SPECTRAL = "verify-spectral"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

ADJOINT_THRESHOLD = 1e-10


# ===============================
# SHARED PIPELINE STEPS
# ===============================

def _operator(cfg: ExperimentConfig) -> VLineOperator:
    return operator_for(cfg.geometry(), cfg.N + 1, cfg.n_jobs)


def _simulate(cfg: ExperimentConfig, op: VLineOperator):
    """
    Phantom, exact data and calibrated noisy data. The noisy sinogram is
    None when delta = 0 or when the exact data vanish.
    """
    phantom = make_phantom(cfg.N, cfg.phantom_spec())
    exact = op.forward(phantom)
    if cfg.delta <= 0:
        return phantom, exact, None, 0.0
    if not np.any(exact.values):
        logger.warning("exact data are zero, relative noise is undefined")
        print(f"Skipping noise: exact data are zero, delta={cfg.delta:g} not applied")
        return phantom, exact, None, 0.0
    noisy, achieved = add_noise(exact, cfg.delta, cfg.seed_for("noise"))
    return phantom, exact, noisy, achieved


def prepare_out_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    marker = path / ".write_check"
    marker.touch()
    marker.unlink()
    return path


# ===============================
# SUBCOMMANDS
# ===============================

def cmd_phantom(cfg: ExperimentConfig, store: ResultsStore) -> Dict[str, Path]:
    phantom = make_phantom(cfg.N, cfg.phantom_spec())
    written = save_image(phantom, cfg.out_dir, "phantom", cfg.formats)
    store.push_record("phantom_summary", {
        "N": cfg.N,
        "kind": cfg.phantom_kind,
        "min": float(phantom.values.min()),
        "max": float(phantom.values.max()),
        "files": ";".join(p.name for p in written.values()),
    })
    print(f"Wrote phantom {phantom.n_side}x{phantom.n_side} to {cfg.out_dir}")
    return written


def cmd_forward(cfg: ExperimentConfig, store: ResultsStore) -> Dict[str, Path]:
    _, exact, noisy, achieved = _simulate(cfg, _operator(cfg))
    written = {f"exact.{k}": v for k, v in save_sinogram(exact, cfg.out_dir, "sinogram", cfg.formats).items()}
    if noisy is not None:
        noisy_files = save_sinogram(noisy, cfg.out_dir, "sinogram_noisy", cfg.formats)
        written.update({f"noisy.{k}": v for k, v in noisy_files.items()})

    store.push_record("forward_summary", {
        "N": cfg.N,
        "P": cfg.P,
        "Q": cfg.Q,
        "weight": cfg.weight().label,
        "delta": cfg.delta,
        "achieved_delta": achieved,
        "noise_seed": cfg.seed_for("noise") if noisy is not None else "",
        "data_norm": float(np.linalg.norm(exact.values)),
    })
    print(f"Wrote sinogram {exact.vertex_count}x{exact.angle_count}, achieved delta {achieved:.6f}")
    return written


def cmd_reconstruct(cfg: ExperimentConfig, store: ResultsStore) -> Dict[str, Path]:
    geom = cfg.geometry()
    op = _operator(cfg)
    phantom = make_phantom(cfg.N, cfg.phantom_spec())
    if cfg.sinogram is not None:
        data = load_sinogram(cfg.sinogram)
        geom.check(data)
    else:
        _, exact, noisy, _ = _simulate(cfg, op)
        data = exact if noisy is None else noisy
    truth = phantom if cfg.truth == "phantom" else None

    written = {}
    for solver_cfg in cfg.solvers:
        label = solver_cfg.label
        logger.info("running %s", label)
        recon, log = chambolle_pock(data, geom, solver_cfg, truth=truth, op=op)

        files = save_image(recon, cfg.out_dir, f"recon_{label}", cfg.formats)
        log_path = cfg.out_dir / f"log_{label}.csv"
        log.to_csv(log_path, wall_time=not cfg.deterministic)
        written.update({f"{label}.{k}": v for k, v in files.items()})
        written[f"{label}.log"] = log_path

        final = log.final()
        store.push_record("reconstruct_summary", {
            "method": label,
            "regularizer": solver_cfg.regularizer.value,
            "alpha": solver_cfg.alpha,
            "positivity": solver_cfg.positivity,
            "final_E2": final.e2 if truth is not None else np.nan,
            "final_R2": final.r2,
            "min_E2": log.min_e2(),
            "iterations": len(log),
        })
        print(f"{label}: final E2 {final.e2:.4e}, final R2 {final.r2:.4e} after {len(log)} iterations")
    return written


def cmd_adjoint_test(cfg: ExperimentConfig, store: ResultsStore, mismatched: bool = False) -> int:
    op = VLineOperator(cfg.geometry(), cfg.N + 1, n_jobs=cfg.n_jobs)
    base = cfg.seed_for("test_vectors")
    defects = [dot_product_test(op, seed=base + i, mismatched=mismatched) for i in range(cfg.adjoint_seeds)]
    worst = max(defects)

    store.push_record("adjoint_test", {
        "N": cfg.N,
        "P": cfg.P,
        "Q": cfg.Q,
        "seeds": cfg.adjoint_seeds,
        "max_defect": worst,
        "mismatched": mismatched,
        "passed": worst < ADJOINT_THRESHOLD,
    })
    print(f"Adjoint defect {worst:.3e} (worst of {cfg.adjoint_seeds} seeds)")
    return EXIT_OK if worst < ADJOINT_THRESHOLD else EXIT_VALIDATION


def cmd_verify_spectral(cfg: ExperimentConfig, store: ResultsStore) -> Dict[str, Path]:
    phantom = make_phantom(cfg.N, cfg.phantom_spec())
    geom = cfg.geometry()
    g = _operator(cfg).forward(phantom)
    weight = cfg.weight()

    keep = geom.psi <= np.pi / 2 - cfg.psi_cut
    psi = geom.psi[keep]

    written = {}
    for ell in range(cfg.l_max + 1):
        ctx = AbelKernelContext(n=2, ell=ell, weight=weight)
        for k in (COSINE,) if ell == 0 else (COSINE, SINE):
            from_forward = sino_coeffs(g, ell, k).samples[keep]
            f_profile = image_coeffs(phantom, ell, k, cfg.radial_nodes)
            from_abel = abel_apply(ctx, f_profile, psi, nodes=cfg.abel_nodes).samples

            diff = np.abs(from_forward - from_abel)
            scale = np.linalg.norm(from_forward)
            rel = float(np.linalg.norm(diff) / scale) if scale > 0 else float(np.linalg.norm(diff))

            path = cfg.out_dir / f"spectral_l{ell}_k{k}.csv"
            pd.DataFrame({
                "psi": psi,
                "forward": from_forward,
                "abel": from_abel,
                "abs_diff": diff,
            }).to_csv(path, index=False, float_format="%.10e")
            written[f"l{ell}_k{k}"] = path

            store.push_record("spectral_summary", {"ell": ell, "k": k, "relative_error": rel})
            print(f"l={ell} k={k}: relative error {rel:.3e}")

    margin = uniqueness_margin(weight, 2)
    store.push_record("spectral_margin", {"weight": weight.label, "n": 2, "margin": margin})
    print(f"Uniqueness margin for {weight.label}: {margin:.10f}")
    if margin <= 0:
        print(f"WARNING: uniqueness margin {margin:.4f} <= 0, the uniqueness hypothesis is not verified")
    return written


# ===============================
# ARGUMENT PARSING
# ===============================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment file (INI sections).")
    common.add_argument("--out", default=None, help="Output directory, overrides the config.")
    common.add_argument("--deterministic", action="store_true", help="Ordered reductions, no timestamps.")
    common.add_argument("--seed", type=int, default=None, help="Experiment seed, overrides the config.")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug.")

    parser = argparse.ArgumentParser(
        prog="vlinect",
        description="Attenuated V-line transform: simulation, reconstruction and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(PHANTOM, parents=[common], help="Write the phantom image.")
    sub.add_parser(FORWARD, parents=[common], help="Write exact and noisy sinograms.")
    sub.add_parser(RECONSTRUCT, parents=[common], help="Run every configured solver.")
    adjoint = sub.add_parser(ADJOINT_TEST, parents=[common], help="Randomised dot-product test.")
    adjoint.add_argument("--mismatched", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser(VERIFY_SPECTRAL, parents=[common], help="Harmonic decomposition check.")
    return parser


# ===============================
# MAIN ROUTER
# ===============================

def route(command: str, cfg: ExperimentConfig, store: ResultsStore, args) -> int:
    if command == PHANTOM:
        cmd_phantom(cfg, store)
        return EXIT_OK

    if command == FORWARD:
        cmd_forward(cfg, store)
        return EXIT_OK

    if command == RECONSTRUCT:
        cmd_reconstruct(cfg, store)
        return EXIT_OK

    if command == ADJOINT_TEST:
        return cmd_adjoint_test(cfg, store, mismatched=getattr(args, "mismatched", False))

    if command == VERIFY_SPECTRAL:
        cmd_verify_spectral(cfg, store)
        return EXIT_OK

    raise VLineError(f"unknown command {command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level_from_verbosity(args.verbose))

    try:
        cfg = load_config(
            args.config,
            out_dir=args.out,
            seed=args.seed,
            deterministic=args.deterministic,
        )
        prepare_out_dir(cfg.out_dir)
        write_effective_config(cfg, cfg.out_dir / "effective_config.ini")

        store = ResultsStore(cfg.out_dir, deterministic=cfg.deterministic)
        code = route(args.command, cfg, store, args)
        store.flush()
        return code

    except DivergenceError as exc:
        print(f"error: solver diverged at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VLineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
