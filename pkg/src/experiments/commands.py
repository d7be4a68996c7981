"""
SOUP Commands Module
The experiment protocols behind each CLI command: load inputs, run, write
artifacts plus a plot-ready CSV and a run manifest
"""
import logging
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np

from core.baselines import OmpParams, debias_codes, omp_code_all
from core.exceptions import DimensionError
from core.learning import (
    LearnConfig,
    LearnState,
    feasibility,
    initial_state,
    learn,
    objective_l0,
    soup_dillo,
    sparse_code_fixed_dictionary,
)
from core.linalg import CoefMatrix, residual_norm2
from core.metrics import metric_report, nsre, nsre_db, nsre_from_fit, psnr, sparsity_factor
from core.patches import PatchGeometry, sample_patches
from core.recon import ReconConfig, reconstruct
from core.reporter import RunManifest, RunReporter
from core.sensing import MeasurementOperator, add_noise, make_mask
from core.thresholding import L0CodeParams, L1CodeParams
from storage import formats

from .config import (
    BenchExperiment,
    CodeExperiment,
    ExperimentConfig,
    LearnExperiment,
    MetricsExperiment,
    ReconExperiment,
    SimulateExperiment,
)
from .phantom import normalize_peak, phantom

logger = logging.getLogger(__name__)

LEARN_COLUMNS = ["iteration", "objective", "fit", "nnz", "nsre", "nsre_db",
                 "sparsity_pct", "dict_change", "coef_change"]
BENCH_COLUMNS = ["case", "signal_length", "num_signals", "num_atoms", "nnz",
                 "seconds_per_iteration", "ratio"]


class PhaseTimer:
    """Wall-clock seconds per named phase"""

    def __init__(self):
        self.timings: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start


def _output_dir(exp: ExperimentConfig) -> Path:
    out = Path(exp.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(exp: ExperimentConfig, rows: List[Dict[str, Any]], columns: Optional[Sequence[str]],
            csv_name: Optional[str], summary: Dict[str, Any], timer: PhaseTimer,
            artifacts: Dict[str, str]) -> RunManifest:
    out = _output_dir(exp)
    if csv_name is not None:
        csv_path = out / csv_name
        RunReporter.generate_csv_report(rows, str(csv_path), columns)
        artifacts["trace"] = str(csv_path)
    manifest_path = out / "manifest.json"
    artifacts["manifest"] = str(manifest_path)
    manifest = RunManifest(
        command=exp.command,
        config=exp.model_dump(mode="json", by_alias=True),
        seed=exp.seed,
        rows=rows,
        summary=summary,
        timings=timer.timings,
        artifacts=artifacts,
    )
    RunReporter.generate_json_report(manifest, str(manifest_path))
    return manifest


def learning_rows(state: LearnState, data_norm2: float) -> List[Dict[str, Any]]:
    """One CSV row per learning iteration; changes are normalized by sqrt(J) and ||Y||_F"""
    n, N, J = state.signal_length, state.num_signals, state.num_atoms
    rows = []
    traces = zip(state.objective_trace, state.fit_trace, state.nnz_trace,
                 state.dict_diff_trace, state.coef_diff_trace)
    for t, (objective, fit, nnz, dict_diff, coef_diff) in enumerate(traces, start=1):
        error = nsre_from_fit(fit, data_norm2)
        rows.append({
            "iteration": t,
            "objective": objective,
            "fit": fit,
            "nnz": nnz,
            "nsre": error,
            "nsre_db": nsre_db(error),
            "sparsity_pct": 100.0 * nnz / (n * N),
            "dict_change": dict_diff / math.sqrt(J),
            "coef_change": coef_diff / math.sqrt(data_norm2),
        })
    return rows


def cmd_learn(exp: LearnExperiment) -> RunManifest:
    """Sample training patches, learn (D, C) with SOUP-DILLO or OS-DL, store both"""
    timer = PhaseTimer()
    out = _output_dir(exp)

    with timer.phase("load"):
        if exp.patches is not None:
            Y = formats.read_patches(exp.patches)
        else:
            images = [formats.read_image(path) for path in exp.images]
            Y = sample_patches(images, exp.patch_side, exp.num_patches, np.random.default_rng(exp.seed))
    n, N = Y.shape
    logger.info("learning from %d patches of length %d", N, n)

    if exp.penalty == "l0":
        penalty = L0CodeParams(lam=exp.lam, cap=exp.cap)
    else:
        penalty = L1CodeParams(mu=exp.mu)
    cfg = LearnConfig(
        num_atoms=exp.num_atoms,
        penalty=penalty,
        iterations=exp.iterations,
        atom_order=exp.atom_order,
        seed=exp.seed,
        record_steps=exp.record_steps,
    )
    with timer.phase("learn"):
        state = learn(Y, initial_state(n, N, exp.num_atoms, exp.init, exp.seed), cfg)

    rows = learning_rows(state, float(np.vdot(Y, Y).real))
    artifacts = {
        "dictionary": str(out / "dictionary.bin"),
        "coefs": str(out / "coefs.bin"),
        "patches": str(out / "patches.bin"),
    }
    with timer.phase("write"):
        formats.write_dictionary(artifacts["dictionary"], state.dictionary)
        formats.write_coefs(artifacts["coefs"], state.coefs)
        formats.write_patches(artifacts["patches"], Y)
        if exp.record_steps:
            steps = [{"step": k, "objective": v} for k, v in enumerate(state.step_trace, start=1)]
            artifacts["steps"] = str(out / "learn_steps.csv")
            RunReporter.generate_csv_report(steps, artifacts["steps"], ["step", "objective"])

    check = feasibility(state.dictionary, state.coefs, exp.cap if exp.penalty == "l0" else None)
    summary = {
        "signals": N,
        "signal_length": n,
        "atoms": exp.num_atoms,
        "final_objective": rows[-1]["objective"],
        "final_nsre": rows[-1]["nsre"],
        "final_sparsity_pct": rows[-1]["sparsity_pct"],
        "threshold_ties": state.tie_count,
        "unit_norm_atoms": check.unit_norm_atoms,
        "bounded_codes": check.bounded_codes,
    }
    return _finish(exp, rows, LEARN_COLUMNS, "learn_trace.csv", summary, timer, artifacts)


def _load_measurements(exp: ReconExperiment):
    mask = formats.read_mask(exp.mask)
    z, grid = formats.read_kspace(exp.kspace)
    if grid != (mask.height, mask.width) or z.size != mask.count:
        raise DimensionError(
            f"{exp.kspace}: {z.size} samples on a {grid[0]}x{grid[1]} grid do not match "
            f"{exp.mask}: {mask.count} samples on {mask.height}x{mask.width}"
        )
    return mask, z


def cmd_recon(exp: ReconExperiment) -> RunManifest:
    """Dictionary-blind reconstruction from stored k-space samples"""
    timer = PhaseTimer()
    out = _output_dir(exp)

    with timer.phase("load"):
        mask, z = _load_measurements(exp)
        reference = None
        if exp.reference is not None:
            reference = normalize_peak(formats.read_image(exp.reference))
            if reference.shape != (mask.height, mask.width):
                raise DimensionError(f"{exp.reference}: reference {reference.shape} does not match the mask grid")

    geom = PatchGeometry(image_h=mask.height, image_w=mask.width, patch_side=exp.patch_side,
                         stride=exp.stride, wrap=exp.wrap)
    cfg = ReconConfig(
        nu=exp.data_weight(geom.num_pixels),
        penalty=exp.penalty,
        weight_schedule=exp.weights(),
        inner_learn_iters=exp.inner(),
        outer_iters=exp.outer_iters,
        geom=geom,
        num_atoms=exp.num_atoms,
        cap=exp.cap,
        solver=exp.solver,
        cg_tol=exp.cg_tol,
        cg_max_iters=exp.cg_max_iters,
        atom_order=exp.atom_order,
        dict_init=exp.init,
        seed=exp.seed,
        track_fixed_objective=exp.track_fixed_objective,
    )
    with timer.phase("reconstruct"):
        state = reconstruct(z, mask, None, cfg, reference=reference)

    K = cfg.inner_learn_iters
    n, N = geom.n, geom.num_patches
    rows = []
    for t in range(cfg.outer_iters):
        nnz = state.learn.nnz_trace[(t + 1) * K - 1]
        row = {
            "iteration": t + 1,
            "weight": cfg.weight_schedule[t],
            "objective": state.objective_trace[t],
            "image_change": state.image_diff_trace[t],
            "nnz": nnz,
            "sparsity_pct": 100.0 * nnz / (n * N),
        }
        if cfg.track_fixed_objective:
            row["fixed_objective"] = state.fixed_objective_trace[t]
        if reference is not None:
            row["psnr_db"] = state.psnr_trace[t]
        rows.append(row)
    columns = ["iteration", "weight", "objective", "image_change", "nnz", "sparsity_pct"]
    if cfg.track_fixed_objective:
        columns.append("fixed_objective")
    if reference is not None:
        columns.append("psnr_db")

    artifacts = {
        "image": str(out / "recon.img"),
        "magnitude": str(out / "recon.pgm"),
        "dictionary": str(out / "dictionary.bin"),
        "coefs": str(out / "coefs.bin"),
    }
    with timer.phase("write"):
        formats.write_image(artifacts["image"], state.image)
        formats.write_pgm(artifacts["magnitude"], state.image, peak=1.0)
        formats.write_dictionary(artifacts["dictionary"], state.learn.dictionary)
        formats.write_coefs(artifacts["coefs"], state.learn.coefs)

    summary: Dict[str, Any] = {
        "nu": cfg.nu,
        "outer_iterations": cfg.outer_iters,
        "inner_iterations": K,
        "final_objective": state.objective_trace[-1] if rows else None,
    }
    if state.feasibility_trace:
        summary["feasible"] = all(f.unit_norm_atoms and f.bounded_codes for f in state.feasibility_trace)
    if reference is not None:
        summary["zero_filled_psnr_db"] = psnr(MeasurementOperator(mask).adjoint(z), reference)
        summary["final_psnr_db"] = psnr(state.image, reference)
    return _finish(exp, rows, columns, "recon_trace.csv", summary, timer, artifacts)


def cmd_simulate(exp: SimulateExperiment) -> RunManifest:
    """Unit-peak reference, seeded mask and (optionally noisy) k-space samples"""
    timer = PhaseTimer()
    out = _output_dir(exp)

    with timer.phase("load"):
        if exp.image is not None:
            reference = normalize_peak(formats.read_image(exp.image))
        else:
            reference = phantom(exp.phantom)
    h, w = reference.shape

    with timer.phase("simulate"):
        mask = make_mask(h, w, exp.scheme, exp.factor, exp.seed)
        A = MeasurementOperator(mask)
        z = A.forward(reference)
        if exp.sigma > 0:
            z = add_noise(z, exp.sigma, np.random.default_rng((exp.seed, 1)))
        zero_filled = A.adjoint(z)
    logger.info("kept %d of %d k-space samples (factor %.3f)", mask.count, h * w, mask.factor)

    artifacts = {
        "mask": str(out / "mask.txt"),
        "kspace": str(out / "kspace.bin"),
        "reference": str(out / "reference.img"),
        "zero_filled": str(out / "zero_filled.img"),
    }
    with timer.phase("write"):
        formats.write_mask(artifacts["mask"], mask)
        formats.write_kspace(artifacts["kspace"], z, mask)
        formats.write_image(artifacts["reference"], reference)
        formats.write_image(artifacts["zero_filled"], zero_filled)

    summary = {
        "height": h,
        "width": w,
        "scheme": exp.scheme,
        "requested_factor": exp.factor,
        "achieved_factor": mask.factor,
        "measurements": mask.count,
        "zero_filled_psnr_db": psnr(zero_filled, reference),
    }
    return _finish(exp, [], None, None, summary, timer, artifacts)


def cmd_code(exp: CodeExperiment) -> RunManifest:
    """Sparse-code stored patches against a fixed dictionary (OMP or l0 block descent)"""
    timer = PhaseTimer()
    out = _output_dir(exp)

    with timer.phase("load"):
        D = formats.read_dictionary(exp.dictionary)
        Y = formats.read_patches(exp.patches)
    if D.shape[0] != Y.shape[0]:
        raise DimensionError(f"{exp.dictionary}: atoms of length {D.shape[0]} for patches of length {Y.shape[0]}")
    n, N = Y.shape

    rows: List[Dict[str, Any]] = []
    with timer.phase("code"):
        if exp.method == "omp":
            C = omp_code_all(D, Y, OmpParams(sparsity=exp.sparsity, err_tol=exp.err_tol))
        else:
            params = L0CodeParams(lam=exp.lam, cap=exp.cap)
            C, trace = sparse_code_fixed_dictionary(Y, D, CoefMatrix.zeros(N, D.shape[1]), params, exp.sweeps)
            rows = [{"sweep": k, "objective": v} for k, v in enumerate(trace, start=1)]
        if exp.debias:
            C = debias_codes(Y, D, C)

    artifacts = {"coefs": str(out / "coefs.bin")}
    with timer.phase("write"):
        formats.write_coefs(artifacts["coefs"], C)

    error = nsre(Y, D, C)
    summary = {
        "method": exp.method,
        "nsre": error,
        "nsre_db": nsre_db(error),
        "sparsity_pct": 100.0 * sparsity_factor(C, n, N),
        "nnz": C.nnz,
    }
    if exp.method == "omp":
        rows = [{"sparsity": exp.sparsity, "nsre": error, "nsre_db": summary["nsre_db"],
                 "sparsity_pct": summary["sparsity_pct"]}]
        columns = ["sparsity", "nsre", "nsre_db", "sparsity_pct"]
    else:
        columns = ["sweep", "objective"]
    return _finish(exp, rows, columns, "code_trace.csv", summary, timer, artifacts)


def cmd_bench(exp: BenchExperiment) -> RunManifest:
    """Time SOUP-DILLO iterations as N and J double.

    Every case is warmed up by one untimed iteration from the DCT start and
    then timed from that state; the fastest of `repeats` runs is kept.
    """
    timer = PhaseTimer()
    n = exp.patch_side ** 2
    N0, J0 = exp.base_signals, exp.base_atoms
    rng = np.random.default_rng(exp.seed)
    Y_all = rng.standard_normal((n, 4 * N0)).astype(np.complex128)
    cases = [
        ("base", N0, J0, None),
        ("signals_x2", 2 * N0, J0, "base"),
        ("signals_x4", 4 * N0, J0, "signals_x2"),
        ("atoms_x2", N0, 2 * J0, "base"),
    ]

    seconds: Dict[str, float] = {}
    rows = []
    for name, N, J, baseline in cases:
        Y = Y_all[:, :N]
        cfg = LearnConfig(num_atoms=J, penalty=L0CodeParams(lam=exp.lam), iterations=1, seed=exp.seed)
        with timer.phase(f"warmup_{name}"):
            warm = soup_dillo(Y, initial_state(n, N, J, "dct", exp.seed), cfg)
        timed = cfg.model_copy(update={"iterations": exp.iterations})
        best = math.inf
        with timer.phase(f"timed_{name}"):
            for _ in range(exp.repeats):
                start = time.perf_counter()
                soup_dillo(Y, warm, timed)
                best = min(best, time.perf_counter() - start)
        seconds[name] = best / exp.iterations
        logger.info("%s: N=%d J=%d %.4f s/iteration", name, N, J, seconds[name])
        rows.append({
            "case": name,
            "signal_length": n,
            "num_signals": N,
            "num_atoms": J,
            "nnz": warm.coefs.nnz,
            "seconds_per_iteration": seconds[name],
            "ratio": seconds[name] / seconds[baseline] if baseline else 1.0,
        })

    summary = {row["case"] + "_ratio": row["ratio"] for row in rows if row["case"] != "base"}
    return _finish(exp, rows, BENCH_COLUMNS, "bench.csv", summary, timer, {})


def cmd_metrics(exp: MetricsExperiment) -> RunManifest:
    """PSNR between two images and/or NSRE and sparsity of stored (Y, D, C)"""
    timer = PhaseTimer()
    row: Dict[str, Any] = {}
    with timer.phase("measure"):
        if exp.image is not None:
            recon = formats.read_image(exp.image)
            ref = formats.read_image(exp.reference)
            row["psnr_db"] = psnr(recon, ref)
        if exp.patches is not None:
            Y = formats.read_patches(exp.patches)
            D = formats.read_dictionary(exp.dictionary)
            C = formats.read_coefs(exp.coefs)
            if exp.lam is not None:
                objective = objective_l0(Y, D, C, exp.lam)
            else:
                objective = residual_norm2(Y, D, C)
            report = metric_report(Y, D, C, objective)
            row.update(
                nsre_pct=report.nsre_pct,
                nsre_db=nsre_db(report.nsre_pct / 100.0),
                sparsity_pct=report.sparsity_pct,
                objective=report.objective,
            )
    columns = [c for c in ("psnr_db", "nsre_pct", "nsre_db", "sparsity_pct", "objective") if c in row]
    return _finish(exp, [row], columns, "metrics.csv", dict(row), timer, {})


COMMANDS = {
    "learn": cmd_learn,
    "recon": cmd_recon,
    "simulate": cmd_simulate,
    "code": cmd_code,
    "bench": cmd_bench,
    "metrics": cmd_metrics,
}
