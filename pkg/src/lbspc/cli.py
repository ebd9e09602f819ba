"""Command-line pipeline: preprocess -> spectra -> SPC -> diagnostics.

Exit codes: 0 = no alarm, 2 = alarm / out-of-control, 1 = error.
Lexicographic filename order defines time order. SPECTRAL_SPC_THREADS caps
per-part parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import charts, fem, plots, register, roi, synthetic
from .reconstruct import scree_curve as _scree_curve
from .config import RunConfig, apply_overrides, load_config
from .mesh import (MeshError, RepairPolicy, load_mesh, save_deviation_ply,
                   save_mesh, validate_and_repair)
from .remesh import RemeshParams, isotropic_remesh

MESH_EXTS = (".off", ".ply", ".obj", ".stl")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SPECTRAL_SPC_THREADS", "1")))
    except ValueError:
        return 1


def _dataset_meshes(dataset_dir: str) -> list[Path]:
    paths = sorted(
        p for p in Path(dataset_dir).iterdir()
        if p.suffix.lower() in MESH_EXTS and p.is_file()
    )
    if not paths:
        raise MeshError(f"no mesh files in {dataset_dir}")
    return paths


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_preprocess(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir) / "preprocessed"
    out.mkdir(parents=True, exist_ok=True)
    paths = _dataset_meshes(cfg.dataset_dir)
    policy = RepairPolicy(keep_largest_component=cfg.keep_largest_component)
    params = RemeshParams(
        target_vertex_count=cfg.target_vertices, iterations=cfg.remesh_iterations
    )
    failures = []

    def work(path: Path):
        mesh = load_mesh(path, validate=False)
        mesh, report = validate_and_repair(mesh, policy)
        if cfg.target_vertices <= 4 * mesh.n_vertices:
            mesh = isotropic_remesh(mesh, params)
        dst = out / (path.stem + ".off")
        save_mesh(mesh, dst)
        return path.name, dst, mesh, report

    results = []
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        for path, fut in [(p, pool.submit(work, p)) for p in paths]:
            try:
                results.append(fut.result())
            except Exception as exc:  # noqa: BLE001 - collected and reported
                failures.append((path.name, str(exc)))
    if failures:
        for name, msg in failures:
            print(f"error: {name}: {msg}", file=sys.stderr)
        return 1
    manifest = Path(cfg.output_dir) / "manifest.csv"
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("part,file,n_vertices,n_faces,sha256,repairs\n")
        for name, dst, mesh, report in results:
            repairs = ";".join(f"{k}={v}" for k, v in report.as_dict().items() if v)
            fh.write(
                f"{name},{dst.name},{mesh.n_vertices},{mesh.n_faces},"
                f"{_file_hash(dst)},{repairs}\n"
            )
    print(f"preprocessed {len(results)} meshes -> {out}")
    return 0


def _auto_k(mesh, cfg: RunConfig) -> int:
    kmax = min(cfg.k_max, mesh.n_vertices - 2)
    spec = fem.spectrum_of(mesh, k=kmax, seed=cfg.seed)
    curve = _scree_curve(mesh.vertices, spec.eigenvectors)
    curve.save_csv(Path(cfg.output_dir) / "scree.csv")
    plots.save_scree_plot(curve, Path(cfg.output_dir) / "scree.svg")
    return curve.selected_k


def cmd_spectrum(cfg: RunConfig) -> int:
    pre = Path(cfg.output_dir) / "preprocessed"
    src = pre if pre.is_dir() else Path(cfg.dataset_dir)
    paths = _dataset_meshes(str(src))
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    first = load_mesh(paths[0])
    k = cfg.resolved_k()
    if k is None:
        k = _auto_k(first, cfg)
        print(f"auto-selected k = {k}")

    def work(path: Path):
        mesh = load_mesh(path)
        return fem.spectrum_of(mesh, k=k, bc=cfg.boundary_condition, seed=cfg.seed)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futs = [(p, pool.submit(work, p)) for p in paths]
        rows, ids = [], []
        for path, fut in futs:
            try:
                spec = fut.result()
            except Exception as exc:
                print(f"error: eigensolve failed for {path.name}: {exc}", file=sys.stderr)
                return 1
            ids.append(path.stem)
            rows.append(spec.eigenvalues)
    out = Path(cfg.output_dir) / "spectra.csv"
    fem.save_spectra_csv(out, ids, np.asarray(rows))
    print(f"wrote {out} ({len(ids)} parts, k={k})")
    return 0


def cmd_select_k(cfg: RunConfig, cad: str | None) -> int:
    if cad:
        mesh = load_mesh(cad)
        ref = "cad"
    else:
        mesh = load_mesh(_dataset_meshes(cfg.dataset_dir)[0])
        ref = "first-in-control"
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    kmax = min(cfg.k_max, mesh.n_vertices - 2)
    spec = fem.spectrum_of(mesh, k=kmax, seed=cfg.seed)
    curve = _scree_curve(mesh.vertices, spec.eigenvectors)
    curve.reference = ref
    curve.save_csv(Path(cfg.output_dir) / "scree.csv")
    plots.save_scree_plot(curve, Path(cfg.output_dir) / "scree.svg")
    print(f"selected k = {curve.selected_k} (reference: {ref})")
    return 0


def _load_spectra(cfg: RunConfig) -> tuple[list[str], np.ndarray]:
    path = Path(cfg.output_dir) / "spectra.csv"
    if not path.exists():
        raise MeshError(f"missing {path}; run the spectrum stage first")
    return fem.load_spectra_csv(path)


def cmd_phase1(cfg: RunConfig) -> int:
    _ids, spectra = _load_spectra(cfg)
    series = spectra[: cfg.m0]
    res = charts.phase1_test(series, n_perm=cfg.n_perm, alpha=cfg.alpha, seed=cfg.seed)
    outdir = Path(cfg.output_dir)
    res.save_csv(outdir / "phase1.csv")
    plots.save_phase1_chart(res, outdir / "phase1.svg")
    with open(outdir / "phase1_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"p_value: {res.p_value:.6g}\n")
        fh.write(f"alarm: {res.alarm}\n")
        fh.write(f"changepoint_estimate: {res.changepoint_estimate}\n")
        fh.write(f"flagged_variables: {res.flagged_variables}\n")
    print(f"phase1 p = {res.p_value:.4g}"
          + (f", changepoint {res.changepoint_estimate}, "
             f"flagged {res.flagged_variables}" if res.alarm else " (in control)"))
    return 2 if res.alarm else 0


def cmd_phase2(cfg: RunConfig) -> int:
    _ids, spectra = _load_spectra(cfg)
    reference, stream = spectra[: cfg.m0], spectra[cfg.m0:]
    if len(stream) == 0:
        print("error: no monitoring rows beyond m0", file=sys.stderr)
        return 1
    res = charts.phase2_chart(
        reference, stream, ewma_lambda=cfg.ewma_lambda,
        target_ARL0=cfg.arl0, n_cal=cfg.n_cal, seed=cfg.seed,
    )
    outdir = Path(cfg.output_dir)
    res.save_csv(outdir / "phase2.csv")
    plots.save_control_chart(res, outdir / "phase2.svg")
    report = [f"h: {res.h:.6g}", f"alarm_time: {res.alarm_time}"]
    if res.alarm:
        tau = charts.estimate_changepoint(reference, stream, res.alarm_time)
        report.append(f"changepoint_estimate: {tau}")
        print(f"phase2 alarm at t = {res.alarm_time}, changepoint ~ {tau}")
    else:
        print("phase2: no alarm")
    (outdir / "phase2_report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    return 2 if res.alarm else 0


def cmd_roi(cfg: RunConfig, part: str, cad: str) -> int:
    part_mesh = load_mesh(part)
    cad_mesh = load_mesh(cad)
    trace = roi.find_roi(
        part_mesh, cad_mesh, max_iter=cfg.roi_max_iter,
        min_vertices=cfg.roi_min_vertices, seed=cfg.seed,
    )
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "roi_report.txt").write_text(trace.report() + "\n", encoding="utf-8")
    save_mesh(trace.roi, outdir / "roi.ply")
    print(trace.report())
    return 0


def cmd_diagnose(cfg: RunConfig, part: str, cad: str) -> int:
    part_mesh = load_mesh(part)
    cad_mesh = load_mesh(cad)
    init = register.RigidTransform.identity()
    corr_path = cfg.correspondences
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        transform, history = register.icp_register(cad_mesh, part_mesh, init)
    except register.LocalMinimumWarning as exc:
        if not corr_path:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        corr = register.load_correspondences(corr_path)
        init = register.initial_align(corr)
        transform, history = register.icp_register(cad_mesh, part_mesh, init)
    np.savetxt(outdir / "transform.txt", transform.to_flat()[None], fmt="%.17g")
    dev = register.localize(cad_mesh, part_mesh, transform)
    save_deviation_ply(cad_mesh, dev, outdir / "deviation.ply")
    print(
        f"registered in {len(history)} iterations, final rms {history[-1]:.6g}; "
        f"max deviation {dev.max():.6g}"
    )
    return 0


def cmd_simulate(cfg: RunConfig, m: int, abnormal_from: int | None,
                 sigma: float, bump_height: float) -> int:
    """Generate a synthetic scanned-part dataset of noisy spheres."""
    outdir = Path(cfg.dataset_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    base = synthetic.icosphere(3)
    for i in range(1, m + 1):
        mesh = base
        if abnormal_from is not None and i >= abnormal_from:
            mesh = synthetic.add_bump(mesh, (0, 0, 1.0), radius=0.5, height=bump_height)
        mesh = synthetic.add_noise(mesh, sigma, seed=cfg.seed + i)
        save_mesh(mesh, outdir / f"part_{i:03d}.off")
    print(f"wrote {m} synthetic parts -> {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lbspc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--dataset", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--k", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--target-vertices", type=int, default=None)
        p.add_argument("--m0", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--lambda", dest="ewma_lambda", type=float, default=None)
        p.add_argument("--arl0", type=float, default=None)
        p.add_argument("--correspondences", default=None)

    for name in ("preprocess", "spectrum", "phase1", "phase2"):
        common(sub.add_parser(name))
    p = sub.add_parser("select-k")
    common(p)
    p.add_argument("--cad", default=None)
    p = sub.add_parser("roi")
    common(p)
    p.add_argument("--part", required=True)
    p.add_argument("--cad", required=True)
    p = sub.add_parser("diagnose")
    common(p)
    p.add_argument("--part", required=True)
    p.add_argument("--cad", required=True)
    p = sub.add_parser("simulate")
    common(p)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--abnormal-from", type=int, default=None)
    p.add_argument("--sigma", type=float, default=0.005)
    p.add_argument("--bump-height", type=float, default=0.1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = apply_overrides(
        cfg,
        dataset_dir=args.dataset,
        output_dir=args.out,
        k=args.k,
        seed=args.seed,
        target_vertices=getattr(args, "target_vertices", None),
        m0=args.m0,
        alpha=args.alpha,
        ewma_lambda=args.ewma_lambda,
        arl0=args.arl0,
        correspondences=args.correspondences,
    )
    try:
        if args.command == "preprocess":
            return cmd_preprocess(cfg)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "select-k":
            return cmd_select_k(cfg, args.cad)
        if args.command == "phase1":
            return cmd_phase1(cfg)
        if args.command == "phase2":
            return cmd_phase2(cfg)
        if args.command == "roi":
            return cmd_roi(cfg, args.part, args.cad)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.part, args.cad)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.m, args.abnormal_from, args.sigma,
                                args.bump_height)
    except (MeshError, ValueError, register.RegistrationError, roi.RoiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
