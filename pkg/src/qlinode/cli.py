"""
Command line entry point and experiment orchestration.

    qlinode methods analyze bdf3 --raster bdf3.ppm
    qlinode encode --problem p.json --method bdf2 --nt 64 --out system.json
    qlinode reference solve --problem p.json --method bdf2 --nt 64
    qlinode analyze kappa --problem p.json --method euler --nt-sweep 16,32,64 --seed 7
    qlinode qlsa run --problem p.json --method bdf2 --epsilon 1e-3 --seed 7
    qlinode qlsa estimate --problem p.json --method bdf2 --epsilon 1e-3
    qlinode validate p.json
    qlinode run config.json

Reports default to stdout; directory outputs fall back to $QLINODE_OUTPUT_DIR
and then ./qlinode-out.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, encoder, io, methods, qlsa, reference
from .problem import OdeProblem, problem_from_dict

OUTPUT_ENV = "QLINODE_OUTPUT_DIR"
STOCHASTIC = {"probe", "qlsa", "full"}
PIPELINES = ("encode", "solve", "error", "kappa", "norm", "probe", "qlsa", "full")


# ---------------------------------------------------------------------------
# Problem validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationResult:
    problem: OdeProblem | None
    errors: list[str] = field(default_factory=list)
    advisories: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _sparsity_errors(data: dict, A: np.ndarray, b, x_in) -> list[str]:
    if data.get("s") is None:
        return []
    s = int(data["s"])
    errs = []
    nz = A != 0
    for i, c in enumerate(nz.sum(axis=1)):
        if c > s:
            errs.append(f"row {i} of A has {c} nonzeros, exceeds declared s={s}")
    for j, c in enumerate(nz.sum(axis=0)):
        if c > s:
            errs.append(f"column {j} of A has {c} nonzeros, exceeds declared s={s}")
    for label, vec in (("b", b), ("x_in", x_in)):
        c = int(np.count_nonzero(vec))
        if c > s:
            errs.append(f"{label} has {c} nonzeros, exceeds declared s={s}")
    return errs


def validate_problem(path: str | Path) -> ValidationResult:
    """Parse a problem file and collect every error and advisory found."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        return ValidationResult(None, [f"{path}: cannot read ({exc.strerror})"])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        return ValidationResult(
            None, [f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line.strip()}"]
        )
    if not isinstance(data, dict):
        return ValidationResult(None, [f"{path}: top level must be an object"])
    errors = [f"missing required key {k!r}" for k in ("A", "b", "x_in", "delta_t") if k not in data]
    if errors:
        return ValidationResult(None, errors)
    s_declared = data.get("s")
    try:
        unchecked = dict(data, s=None)
        problem = problem_from_dict(unchecked, name=path.stem)
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        return ValidationResult(None, [str(exc)])
    errors = _sparsity_errors(data, problem.A, problem.b, problem.x_in)
    if errors:
        return ValidationResult(None, errors)
    if s_declared is not None:
        problem = problem_from_dict(data, name=path.stem)
    advisories = []
    try:
        sd = reference.eigen_condition(problem.A)
        if sd.has_zero_eigenvalue:
            advisories.append("A has a zero eigenvalue; outside the open wedge")
        elif not sd.satisfies_wedge():
            advisories.append(
                f"eigenvalue wedge angle {sd.wedge_angle:.4f} rad exceeds pi/2; errors may grow"
            )
        advisories.append(f"kappa_V = {sd.kappa_V:.6g}, wedge angle = {sd.wedge_angle:.6g} rad")
    except reference.DefectiveMatrixError as exc:
        advisories.append(f"A is not diagonalisable ({exc}); error and condition bounds do not apply")
    return ValidationResult(problem, [], advisories)


def _load_problem_or_exit(path) -> OdeProblem:
    res = validate_problem(path)
    if not res.ok:
        raise SystemExit("\n".join(f"error: {e}" for e in res.errors))
    return res.problem


# ---------------------------------------------------------------------------
# Report builders
# ---------------------------------------------------------------------------


def _block_label(block: np.ndarray) -> str:
    n = block.shape[0]
    eye = np.eye(n)
    if np.array_equal(block, eye):
        return "I"
    if np.array_equal(block, -eye):
        return "-I"
    return "M"


def encode_report(system: encoder.EncodedSystem) -> dict:
    coo = system.to_sparse().tocoo()
    order = np.lexsort((coo.col, coo.row))
    pattern = [["0"] * (system.N_t + 1) for _ in range(system.N_t + 1)]
    for r, c, blk in zip(system.block_rows, system.block_cols, system.block_data):
        pattern[r][c] = _block_label(blk)
    return {
        "method": system.method.to_dict(),
        "N_t": system.N_t,
        "N_x": system.N_x,
        "dt": system.dt,
        "dimension": system.dim,
        "nonzeros": system.nnz,
        "oracle_counts": system.counter.as_dict(),
        "block_pattern": pattern,
        "blocks": [
            {"row": int(r), "col": int(c), "data": blk}
            for r, c, blk in zip(system.block_rows, system.block_cols, system.block_data)
        ],
        "coo": [
            [int(coo.row[i]), int(coo.col[i]), float(np.real(coo.data[i])), float(np.imag(coo.data[i]))]
            for i in order
        ],
        "calb": [[float(np.real(v)), float(np.imag(v))] for v in system.calb],
    }


def history_rows(hist: reference.SolutionHistory):
    vecs = hist.vectors
    cplx = np.iscomplexobj(vecs)
    header = ["t"]
    for i in range(vecs.shape[1]):
        header += [f"x{i}_re", f"x{i}_im"] if cplx else [f"x{i}"]
    rows = []
    for t, v in zip(hist.times, vecs):
        row = [float(t)]
        for z in v:
            row += [float(z.real), float(z.imag)] if cplx else [float(z.real)]
        rows.append(row)
    return header, rows


def qlsa_report(
    problem: OdeProblem,
    method: methods.MultistepMethod,
    epsilon: float,
    seed: int,
    N_t: int | None = None,
    trials: int = 100,
) -> dict:
    spectral = reference.eigen_condition(problem.A)
    est = qlsa.resource_estimate(problem, method, spectral, epsilon)
    if N_t is None:
        N_t = est.N_t
    system = encoder.build_system(problem, method, N_t)
    state = qlsa.history_state(system)
    x_final = reference.exact_solution(problem, problem.t_final)
    eps_L = qlsa.error_budget(problem, N_t, epsilon)
    post = qlsa.postselect_final(state, x_final, min(eps_L, 0.999), trials, seed)
    return {
        "N_t": N_t,
        "dt": system.dt,
        "p_time": post.p_time,
        "epsilon": epsilon,
        "epsilon_L": eps_L,
        "trace_distance": post.to_dict(),
        "resource_estimate": est.to_dict(),
        "oracle_counts": system.counter.as_dict(),
    }


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    method: str
    nt_sweep: tuple[int, ...] = (16, 32, 64, 128)
    epsilon: float = 1e-3
    seed: int | None = None
    output_dir: str | None = None
    report_format: str = "json"
    pipeline: str = "full"
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        data = dict(data)
        if base is not None:
            prob = Path(data["problem"])
            if not prob.is_absolute():
                data["problem"] = str(base / prob)
            meth = data.get("method", "")
            if meth.endswith(".json") and not Path(meth).is_absolute():
                data["method"] = str(base / meth)
        data["nt_sweep"] = tuple(int(n) for n in data.get("nt_sweep", cls.nt_sweep))
        return cls(**data)

    def validate(self, method: methods.MultistepMethod) -> list[str]:
        errs = []
        if self.pipeline not in PIPELINES:
            errs.append(f"pipeline must be one of {PIPELINES}")
        if self.report_format not in ("csv", "json"):
            errs.append("report_format must be csv or json")
        for n in self.nt_sweep:
            if n % 2 or n < 2 * method.k:
                errs.append(f"nt_sweep value {n} must be even and >= {2 * method.k}")
        if self.pipeline in STOCHASTIC and self.seed is None:
            errs.append(f"pipeline {self.pipeline!r} is stochastic and needs a seed")
        return errs

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("output_dir")
        payload["problem_sha256"] = hashlib.sha256(Path(self.problem).read_bytes()).hexdigest()
        return hashlib.sha256(io.dumps(payload).encode()).hexdigest()


def _output_dir(explicit: str | None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ENV) or "qlinode-out")


def _sweep_outputs(kind, problem, method, cfg: ExperimentConfig, out: Path, meta: dict) -> list[Path]:
    tol = cfg.tolerances
    rows, fit = analysis.run_sweep(
        kind,
        problem,
        method,
        cfg.nt_sweep,
        seed=cfg.seed,
        trials=int(tol.get("trials", 100)),
        window=float(tol.get("fit_window", analysis.FIT_WINDOW)),
    )
    files = [io.write_csv(out / f"{kind}.csv", analysis.SweepRow._fields, rows)]
    files.append(io.write_json(out / f"{kind}_fit.json", dict(meta, fit=None if fit is None else fit.to_dict())))
    return files


def run_experiment(config: ExperimentConfig) -> list[Path]:
    """Run the configured pipeline and write its reports; returns the file paths."""
    method = methods.load_method(config.method)
    errs = config.validate(method)
    if errs:
        raise ValueError("; ".join(errs))
    problem = _load_problem_or_exit(config.problem)
    out = _output_dir(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": config.config_hash(), "problem": problem.name, "method": method.name}
    stages = ("encode", "solve", "error", "kappa", "norm", "probe", "qlsa") if config.pipeline == "full" else (config.pipeline,)
    files: list[Path] = []
    N_t = config.nt_sweep[0]
    for stage in stages:
        if stage == "encode":
            system = encoder.build_system(problem, method, N_t)
            files.append(io.write_json(out / "encode.json", dict(meta, system=encode_report(system))))
        elif stage == "solve":
            hist = reference.multistep_solve(problem, method, N_t)
            header, rows = history_rows(hist)
            if config.report_format == "csv":
                files.append(io.write_csv(out / "history.csv", header, rows))
            else:
                files.append(io.write_json(out / "history.json", dict(meta, header=header, rows=rows)))
        elif stage in ("error", "kappa", "norm", "probe"):
            files += _sweep_outputs(stage, problem, method, config, out, meta)
        elif stage == "qlsa":
            report = qlsa_report(problem, method, config.epsilon, config.seed, N_t=max(config.nt_sweep))
            files.append(io.write_json(out / "qlsa.json", dict(meta, **report)))
    return files


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_sweep(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _cmd_methods(args) -> int:
    method = methods.load_method(args.target)
    raster = None
    if args.raster:
        re0, re1, im0, im1 = (float(v) for v in args.grid.split(","))
        raster = {"re_bounds": (re0, re1), "im_bounds": (im0, im1), "resolution": (args.resolution, args.resolution)}
    report = methods.stability_report(
        method, angular_resolution=args.angular_resolution, raster=raster, tol=args.eq_tol
    )
    if args.raster:
        if args.raster.endswith(".csv"):
            report.domain.to_csv(args.raster)
        else:
            report.domain.to_ppm(args.raster)
    _emit(io.dumps(report.to_dict()), args.out)
    return 0


def _cmd_encode(args) -> int:
    problem = _load_problem_or_exit(args.problem)
    system = encoder.build_system(problem, methods.load_method(args.method), args.nt)
    _emit(io.dumps(encode_report(system)), args.out)
    return 0


def _cmd_reference(args) -> int:
    problem = _load_problem_or_exit(args.problem)
    hist = reference.multistep_solve(problem, methods.load_method(args.method), args.nt, starter=args.starter)
    header, rows = history_rows(hist)
    _emit(io.csv_text(header, rows), args.out)
    return 0


def _cmd_analyze(args) -> int:
    if args.kind == "probe" and args.seed is None:
        raise SystemExit("error: --seed is required for probe")
    cfg = ExperimentConfig(
        problem=args.problem,
        method=args.method,
        nt_sweep=tuple(_parse_sweep(args.nt_sweep)),
        seed=args.seed,
        output_dir=args.out_dir,
        pipeline=args.kind,
        tolerances={"fit_window": args.fit_window, "trials": args.trials},
    )
    for f in run_experiment(cfg):
        print(f)
    return 0


def _cmd_qlsa(args) -> int:
    problem = _load_problem_or_exit(args.problem)
    method = methods.load_method(args.method)
    if args.action == "run":
        if args.seed is None:
            raise SystemExit("error: --seed is required for qlsa run")
        report = qlsa_report(problem, method, args.epsilon, args.seed, N_t=args.nt, trials=args.trials)
    else:
        spectral = reference.eigen_condition(problem.A)
        report = qlsa.resource_estimate(problem, method, spectral, args.epsilon, args.ambainis_c).to_dict()
    _emit(io.dumps(report), args.out)
    return 0


def _cmd_validate(args) -> int:
    res = validate_problem(args.path)
    for e in res.errors:
        print(f"error: {e}")
    for a in res.advisories:
        print(f"advisory: {a}")
    if res.ok:
        print(f"ok: {res.problem.name} (N_x={res.problem.N_x}, s={res.problem.s})")
    return 0 if res.ok else 1


def _cmd_run(args) -> int:
    path = Path(args.config)
    cfg = ExperimentConfig.from_dict(json.loads(path.read_text()), base=path.parent)
    if args.out_dir:
        cfg = ExperimentConfig(**{**asdict(cfg), "output_dir": args.out_dir})
    for f in run_experiment(cfg):
        print(f)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlinode", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("methods", help="analyse a multistep method")
    p.add_argument("action", choices=["analyze"])
    p.add_argument("target", help="registry name or JSON method file")
    p.add_argument("--angular-resolution", type=float, default=1e-3)
    p.add_argument("--eq-tol", type=float, default=methods.EQ_TOL)
    p.add_argument("--raster", help="write the stability domain to a .ppm or .csv file")
    p.add_argument("--grid", default="-3,1,-2,2", help="re_min,re_max,im_min,im_max")
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_methods)

    def problem_args(p, nt=True):
        p.add_argument("--problem", required=True)
        p.add_argument("--method", required=True)
        if nt:
            p.add_argument("--nt", type=int, required=True)

    p = sub.add_parser("encode", help="assemble the block linear system")
    problem_args(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("reference", help="sequential multistep solution")
    p.add_argument("action", choices=["solve"])
    problem_args(p)
    p.add_argument("--starter", choices=["euler", "exact"], default="euler")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("analyze", help="sweep N_t and fit a scaling law")
    p.add_argument("kind", choices=["kappa", "error", "norm", "probe"])
    problem_args(p, nt=False)
    p.add_argument("--nt-sweep", default="16,32,64,128")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--fit-window", type=float, default=analysis.FIT_WINDOW)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("qlsa", help="quantum pipeline model")
    p.add_argument("action", choices=["run", "estimate"])
    problem_args(p, nt=False)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--nt", type=int)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--ambainis-c", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_qlsa)

    p = sub.add_parser("validate", help="check a problem file")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        try:
            return args.func(args)
        except (KeyError, ValueError, np.linalg.LinAlgError, qlsa.PostselectionError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
