"""Command-line entry point: ``crlab run --study h --case u2 -p 2 ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .analysis import STUDIES, StudyConfig, run_study, validate_config, validate_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# key=value config names and the parser applied to the value
_FIELDS = {
    "study": str,
    "case": str,
    "variant": str,
    "p": int,
    "eta": float,
    "form": str,
    "levels": int,
    "mesh_family": str,
    "mesh_n": int,
    "p_values": lambda s: tuple(int(v) for v in s.replace(",", " ").split()),
    "eta_values": lambda s: tuple(float(v) for v in s.replace(",", " ").split()),
    "grading": float,
    "output": str,
    "threads": int,
}


def read_config(path) -> tuple[dict, list[str]]:
    """Parse a flat key=value file; '#' starts a comment. Returns values and errors."""
    values, errs = {}, []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        return {}, [f"config: cannot read {path}: {exc.strerror}"]
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"config line {n}: expected key=value, got {line!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            errs.append(f"config line {n}: unknown key {key!r}")
            continue
        try:
            values[key] = _FIELDS[key](val)
        except ValueError:
            errs.append(f"config line {n}: bad value {val!r} for {key}")
    return values, errs


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crlab", description="Convergence studies for Crouzeix-Raviart type elements.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one study and print its table")
    run.add_argument("--config", help="flat key=value file; flags override its entries")
    run.add_argument("--study", choices=sorted(STUDIES))
    run.add_argument("--case")
    run.add_argument("--variant")
    run.add_argument("-p", type=int, dest="p", help="polynomial degree")
    run.add_argument("--eta", type=float, help="penalty parameter (default 20, or 5p^2 for dg)")
    run.add_argument("--form", help="bilinear form: plain, stabilized, stabilized-variable, sip-dg")
    run.add_argument("--levels", type=int, help="number of meshes (hp: largest refinement index)")
    run.add_argument("--mesh-family", dest="mesh_family")
    run.add_argument("--mesh-n", type=int, dest="mesh_n", help="coarse unit-square subdivisions per side")
    run.add_argument("--p-values", dest="p_values", type=_FIELDS["p_values"], help="comma-separated degrees")
    run.add_argument("--eta-values", dest="eta_values", type=_FIELDS["eta_values"], help="comma-separated penalties")
    run.add_argument("--grading", type=float)
    run.add_argument("--threads", type=int, help="worker threads (default: CRLAB_THREADS or 1)")
    run.add_argument("-o", "--output", help="write the table as CSV")
    run.add_argument("--validate-only", action="store_true", help="run all checks without solving")
    return ap


def _defaults_for(study: str | None) -> dict:
    if study == "stokes":
        return {"mesh_family": "unionjack", "p": 4}
    if study == "p":
        return {"mesh_n": 7}
    if study == "hp":
        return {"case": "u3", "levels": 6}
    if study == "patch":
        return {"case": "u1"}
    if study == "eta-sweep":
        return {"mesh_n": 4}
    return {}


def make_config(args) -> tuple[StudyConfig, list[str]]:
    """Merge defaults, config file and flags (in increasing priority)."""
    values, errs = ({}, []) if args.config is None else read_config(args.config)
    flags = {k: getattr(args, k) for k in _FIELDS if getattr(args, k, None) is not None}
    study = flags.get("study", values.get("study", "h"))
    merged = {**_defaults_for(study), **values, **flags}
    return StudyConfig(**merged), errs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config, errs = make_config(args)
    errs += validate_config(config)
    if errs:
        print("error: invalid configuration", file=sys.stderr)
        for e in errs:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.validate_only:
            for msg in validate_study(config):
                print(msg)
            print("validation passed")
            return EXIT_OK
        result = run_study(config)
    except Exception as exc:  # report every failure as a structured diagnostic
        print(f"error: {config.study} study failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(result.table())
    if config.output:
        try:
            result.write_csv(config.output)
        except OSError as exc:
            print(f"error: cannot write {config.output}: {exc.strerror}", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def config_fields() -> list[str]:
    return [f.name for f in dataclasses.fields(StudyConfig)]


if __name__ == "__main__":
    sys.exit(main())
