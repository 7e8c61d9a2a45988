"""Command-line interface.

Exit codes:
  0  success
  1  ``check``: T is not identifiable; ``adversarial`` and experiment 2:
     T is identifiable, so no adversarial exists
  2  unreadable input, shape mismatch, or bad flags
  3  a post-condition failed beyond tolerance, or the computation degenerated
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adversarial import generate_adversarial
from .core import efficient_attention, identifiability, validate_distribution
from .errors import DegenerateError, DimensionError, IdentifiableError, ValidationError
from .harness import (
    ExperimentConfig,
    run_experiment1,
    run_experiment2,
    run_experiment3,
)
from .linalg import TOLERANCE_ENV_VAR, Tolerance, augment_ones
from .metrics import compare_predictions

EXIT_OK = 0
EXIT_IDENTIFIABLE = 1
EXIT_INPUT = 2
EXIT_VALIDATION = 3

RUNNERS = {1: run_experiment1, 2: run_experiment2, 3: run_experiment3}


class MatrixFileError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class _InputError(Exception):
    """Internal: abort the command with exit code 2."""


def read_matrix(path) -> np.ndarray:
    """Parse a headerless comma-separated matrix; blank lines are skipped."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MatrixFileError(path, None, exc.strerror or str(exc)) from None
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [float(cell) for cell in line.split(",")]
        except ValueError:
            raise MatrixFileError(path, lineno, f"not a number in {line!r}") from None
        if not all(np.isfinite(row)):
            raise MatrixFileError(path, lineno, "non-finite value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MatrixFileError(path, lineno, f"expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise MatrixFileError(path, None, "no data")
    return np.array(rows, dtype=float)


def format_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in m)


def write_matrix(path, m) -> None:
    Path(path).write_text(format_matrix(m))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _tolerance(args) -> Tolerance:
    tol = Tolerance.from_env()
    if getattr(args, "rank_tol", None) is not None:
        tol = replace(tol, rank_rel=args.rank_tol)
    if getattr(args, "check_tol", None) is not None:
        tol = replace(tol, check_abs=args.check_tol)
    return tol


def _load_pair(a_path, t_path):
    a = read_matrix(a_path)
    t = read_matrix(t_path)
    if a.shape[0] != a.shape[1]:
        raise _InputError(f"{a_path}: attention matrix must be square, got {a.shape}")
    if a.shape[0] != t.shape[0]:
        raise _InputError(f"{a_path} has {a.shape[0]} rows but {t_path} has {t.shape[0]}")
    return a, t


def _projection_summary(a, a_eff, t, tol: Tolerance) -> dict:
    return {
        "d_s": int(a.shape[0]),
        "row_sum_max_error": float(np.max(np.abs(a_eff.sum(axis=1) - 1.0))),
        "min_entry": float(a_eff.min()),
        "prediction_max_error": float(np.max(np.abs(a_eff @ t - a @ t))),
        "tolerance": tol.to_dict(),
    }


def project_one(a, t, tol: Tolerance, allow_negative: bool) -> tuple[np.ndarray, dict, bool]:
    a_eff = efficient_attention(a, t, tol, check=False, on_negative="ignore")
    summary = _projection_summary(a, a_eff, t, tol)
    ok = (summary["row_sum_max_error"] <= tol.check_abs
          and summary["prediction_max_error"] <= tol.check_abs
          and (allow_negative or summary["min_entry"] >= -tol.check_abs))
    summary["passed"] = ok
    return a_eff, summary, ok


def cmd_project(args) -> int:
    tol = _tolerance(args)
    a, t = _load_pair(args.a_path, args.t_path)
    a_eff, summary, ok = project_one(a, t, tol, args.allow_negative)
    write_matrix(args.out, a_eff)
    print(_dump(summary))
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_check(args) -> int:
    tol = _tolerance(args)
    t = read_matrix(args.t_path)
    if args.dv is not None and args.dv < 1:
        raise _InputError("--dv must be positive")
    verdict = identifiability(t, args.dv, tol)
    print(_dump(verdict.to_dict()))
    return EXIT_OK if verdict.stochastic_identifiable else EXIT_IDENTIFIABLE


def cmd_adversarial(args) -> int:
    tol = _tolerance(args)
    a, t = _load_pair(args.a_path, args.t_path)
    if validate_distribution(a, tol):
        raise _InputError(f"{args.a_path}: rows are not probability distributions")
    sample = generate_adversarial(a, t, args.seed, tol, per_row=not args.shared_step)
    adv = sample.adversarial
    eff = efficient_attention(a, t, tol, on_negative="ignore")
    adv_eff = efficient_attention(adv, t, tol, on_negative="ignore")
    kernel_residual = float(np.max(np.abs((adv - a) @ augment_ones(t))))
    sidecar = {
        "seed": args.seed,
        "lambda_used": sample.lambda_used,
        "row_lambdas": [float(x) for x in sample.row_lambdas],
        "shared_step": bool(args.shared_step),
        "max_attention_change": sample.max_change,
        "prediction_max_error": float(np.max(np.abs(adv @ t - a @ t))),
        "kernel_residual": kernel_residual,
        "row_sum_max_error": float(np.max(np.abs(adv.sum(axis=1) - 1.0))),
        "min_entry": float(adv.min()),
        "efficient_projection_max_diff": float(np.max(np.abs(adv_eff - eff))),
        "tolerance": tol.to_dict(),
        "version": __version__,
    }
    sidecar["passed"] = bool(
        sidecar["prediction_max_error"] <= tol.check_abs
        and kernel_residual <= tol.check_abs
        and sidecar["efficient_projection_max_diff"] <= 1e-8
        and not validate_distribution(adv, tol))
    out = Path(args.out)
    write_matrix(out, adv)
    sidecar_path = Path(args.sidecar) if args.sidecar else out.with_suffix(out.suffix + ".json")
    sidecar_path.write_text(_dump(sidecar) + "\n")
    print(_dump(sidecar))
    return EXIT_OK if sidecar["passed"] else EXIT_VALIDATION


def _config_from_args(args) -> ExperimentConfig:
    tol = _tolerance(args)
    if args.from_report:
        try:
            data = json.loads(Path(args.from_report).read_text())
            cfg = dict(data["config"])
            cfg["tol"] = Tolerance(**cfg["tol"])
            return ExperimentConfig(**cfg)
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise _InputError(f"{args.from_report}: cannot read report config ({exc})")
    missing = [f for f in ("ds", "d", "dv", "dq", "n", "seed") if getattr(args, f) is None]
    if missing:
        raise _InputError("missing flags: " + ", ".join("--" + m for m in missing))
    try:
        return ExperimentConfig(args.ds, args.d, args.dv, args.dq, args.n, args.seed,
                                label=args.label, renormalize_complement=args.renormalize,
                                tol=tol)
    except ValueError as exc:
        raise _InputError(str(exc)) from None


def cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    number = args.name
    if args.from_report:
        number = int(json.loads(Path(args.from_report).read_text())["experiment"])
    report = RUNNERS[number](cfg)
    out = Path(args.out)
    Path(str(out) + ".json").write_text(report.to_json())
    Path(str(out) + ".csv").write_text(report.to_csv())
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def _read_vector(path) -> np.ndarray:
    m = read_matrix(path)
    if m.shape[1] != 1:
        raise _InputError(f"{path}: expected a single column, got {m.shape[1]}")
    return m[:, 0]


def cmd_metrics(args) -> int:
    p = _read_vector(args.p_path)
    q = _read_vector(args.q_path)
    if p.shape != q.shape:
        raise _InputError(f"length mismatch: {p.size} vs {q.size}")
    print(_dump(compare_predictions(p, q).to_dict()))
    return EXIT_OK


def load_manifest(path) -> tuple[list[dict], Tolerance | None]:
    """Read a batch manifest; relative file paths resolve against its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise _InputError(f"{path}: cannot read manifest ({exc})") from None
    entries = data.get("entries") if isinstance(data, dict) else None
    if not isinstance(entries, list) or not entries:
        raise _InputError(f"{path}: manifest needs a non-empty 'entries' list")
    seen = set()
    out = []
    for k, entry in enumerate(entries):
        try:
            ident, a_path, t_path = str(entry["id"]), entry["a_path"], entry["t_path"]
        except (KeyError, TypeError):
            raise _InputError(f"{path}: entry {k} needs id, a_path and t_path") from None
        if ident in seen:
            raise _InputError(f"{path}: duplicate id {ident!r}")
        seen.add(ident)
        a_file = (path.parent / a_path)
        t_file = (path.parent / t_path)
        for f in (a_file, t_file):
            if not f.is_file():
                raise _InputError(f"{path}: entry {ident!r} references missing file {f}")
        out.append({"id": ident, "a_path": a_file, "t_path": t_file})
    tol = None
    if data.get("tolerance"):
        tol = Tolerance(**{**Tolerance().to_dict(), **data["tolerance"]})
    return out, tol


def cmd_batch(args) -> int:
    entries, manifest_tol = load_manifest(args.manifest)
    tol = _tolerance(args)
    if manifest_tol is not None and args.check_tol is None and args.rank_tol is None:
        tol = manifest_tol
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = [(e, *_load_pair(e["a_path"], e["t_path"])) for e in entries]
    results = {}
    all_ok = True
    for entry, a, t in pairs:
        a_eff, summary, ok = project_one(a, t, tol, args.allow_negative)
        write_matrix(out_dir / f"{entry['id']}.eff.csv", a_eff)
        summary["identifiability"] = identifiability(t, None, tol).to_dict()
        results[entry["id"]] = summary
        all_ok &= ok
    summary_text = _dump({"entries": results, "version": __version__}) + "\n"
    (out_dir / "summary.json").write_text(summary_text)
    sys.stdout.write(summary_text)
    return EXIT_OK if all_ok else EXIT_VALIDATION


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--check-tol", type=float, help="absolute check tolerance")
    p.add_argument("--rank-tol", type=float, help="relative rank tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efficient-attention",
        description="Project attention matrices onto Im([T,1]) and run checks.",
        epilog=f"Tolerance defaults can be overridden with {TOLERANCE_ENV_VAR}="
               "'rank_rel=1e-10,check_abs=1e-9'; flags take precedence.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="write the efficient attention of A")
    p.add_argument("a_path")
    p.add_argument("t_path")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--allow-negative", action="store_true",
                   help="do not fail when the projection has negative entries")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("check", help="identifiability verdict for T")
    p.add_argument("t_path")
    p.add_argument("--dv", type=int)
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("adversarial", help="kernel adversarial of A with the same A.T")
    p.add_argument("a_path")
    p.add_argument("t_path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--sidecar", help="JSON sidecar path (default: OUT.json)")
    p.add_argument("--shared-step", action="store_true",
                   help="use one step size for every row")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_adversarial)

    p = sub.add_parser("experiment", help="run synthetic experiment 1, 2 or 3")
    p.add_argument("name", type=int, choices=(1, 2, 3))
    p.add_argument("--ds", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--dv", type=int)
    p.add_argument("--dq", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--label", default="synthetic")
    p.add_argument("--renormalize", action="store_true",
                   help="experiment 3: divide 1 - A by d_s - 1 before projecting")
    p.add_argument("--from-report", help="re-run the config embedded in a JSON report")
    p.add_argument("-o", "--out", required=True, help="output prefix (.json and .csv)")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metrics", help="compare two single-column prediction files")
    p.add_argument("p_path")
    p.add_argument("q_path")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("batch", help="project every entry of a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--allow-negative", action="store_true")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        try:
            _tolerance(args)
        except ValueError as exc:
            raise _InputError(f"bad tolerance: {exc}") from None
        return args.func(args)
    except (_InputError, MatrixFileError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IdentifiableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABLE
    except (ValidationError, DegenerateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
