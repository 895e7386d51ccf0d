"""Command-line driver: reproducible experiment runs and hypothesis checks.

``degensde run <config.json>`` executes one experiment and writes a JSON
report, a CSV table, and an atomically-replaced run manifest into the
output directory.  ``degensde check <config.json>`` prints a pass/fail
line for each standing hypothesis of the configured family.

Exit codes are the machine contract: 0 all verdicts pass, 1 a verdict
or hypothesis fails, 2 usage or configuration error.

Config files are JSON::

    {
      "schema_version": 1,
      "kind": "nonexplosion",
      "name": "powerlaw-nonexplosion",
      "budget": 1000,
      "family": {"name": "power_law", "dim": 3, "alpha": 0.3},
      "sim": {"step": 0.001, "horizon": 1.0, "seed": 7},
      "start": [1.0, 0.0, 0.0],
      "params": {},
      "check": {"n0": 1, "window_center": [2.0, 0.0, 0.0],
                "window_radius": 0.5, "exponent_margin": 1.0}
    }

The optional ``check`` block configures only ``degensde check``.
Overrides use dotted paths (``--override sim.step=0.0005``); values are
parsed as JSON with a plain-string fallback.  A missing ``sim.seed`` is
drawn from OS entropy and recorded in the manifest, never silent.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import secrets
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .coefficients import (
    CoefficientError,
    EvaluationError,
    admissible_alpha_bound,
    build_family,
    check_h2,
    check_h3_window,
    eval_all,
    select_exponents,
)
from .sde_sim import SimConfig, SimulationError
from .verify import (
    ExperimentConfig,
    VerificationError,
    run_experiment,
)

__all__ = ["main", "run", "check_hypotheses"]

CONFIG_SCHEMA_VERSION = 1

_CONFIG_KEYS = {
    "schema_version",
    "kind",
    "name",
    "budget",
    "family",
    "sim",
    "start",
    "params",
    "check",
}

_SIM_KEYS = {
    "step",
    "horizon",
    "seed",
    "path_count",
    "explosion_threshold",
    "degeneracy_thickness",
}


class CliError(Exception):
    """Configuration or usage problem; maps to exit code 2."""


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    version = config.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise CliError(
            f"config field 'schema_version' must be {CONFIG_SCHEMA_VERSION}, "
            f"got {version!r}"
        )
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config fields {sorted(unknown)}")
    return config


def _apply_override(config: dict, text: str) -> None:
    if "=" not in text:
        raise CliError(f"override {text!r} must have the form key=value")
    dotted, raw = text.split("=", 1)
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise CliError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = {}
            node[key] = child
        if not isinstance(child, dict):
            raise CliError(f"override {text!r}: {key!r} is not an object")
        node = child
    node[keys[-1]] = value


def _experiment_from_config(config: dict, seed_flag) -> tuple[ExperimentConfig, bool]:
    """Resolve the config dict into an ExperimentConfig.

    Returns the config and whether the seed was drawn from entropy.
    """
    if "kind" not in config:
        raise CliError("config field 'kind' is required")
    if "budget" not in config:
        raise CliError("config field 'budget' is required")
    kind = config["kind"]
    params = dict(config.get("params", {}))
    seed_generated = False

    sim_cfg = None
    if config.get("sim") is not None:
        sim = dict(config["sim"])
        unknown = set(sim) - _SIM_KEYS
        if unknown:
            raise CliError(f"unknown sim fields {sorted(unknown)}")
        if seed_flag is not None:
            sim["seed"] = seed_flag
        elif "seed" not in sim:
            sim["seed"] = secrets.randbits(63)
            seed_generated = True
        try:
            sim_cfg = SimConfig(**sim)
        except SimulationError as exc:
            raise CliError(f"config field 'sim' is invalid: {exc}") from exc
    elif kind == "maximal_suite":
        if seed_flag is not None:
            params["seed"] = seed_flag
        elif "seed" not in params:
            params["seed"] = secrets.randbits(63)
            seed_generated = True

    try:
        experiment = ExperimentConfig(
            kind=kind,
            budget=config["budget"],
            family=config.get("family"),
            sim=sim_cfg,
            start=config.get("start"),
            params=params,
            name=str(config.get("name", "")),
        )
    except VerificationError as exc:
        raise CliError(f"config is invalid: {exc}") from exc
    if experiment.family is not None:
        # surface family problems (dimension, admissibility) before running
        try:
            build_family(dict(experiment.family))
        except CoefficientError as exc:
            raise CliError(f"config field 'family' is invalid: {exc}") from exc
    return experiment, seed_generated


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "experiment"


def run(config_path, *, seed=None, threads=1, out_dir=".", overrides=()) -> int:
    """Execute one experiment run; returns the process exit code."""
    if threads < 1:
        raise CliError(f"--threads must be >= 1, got {threads}")
    config = _load_config(config_path)
    for text in overrides:
        _apply_override(config, text)
    experiment, seed_generated = _experiment_from_config(config, seed)

    try:
        report = run_experiment(experiment, threads=threads)
    except (VerificationError, CoefficientError, SimulationError) as exc:
        raise CliError(f"experiment failed to run: {exc}") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _slug(experiment.name or experiment.kind)
    json_path = out / f"{base}_report.json"
    csv_path = out / f"{base}_report.csv"
    report.save_json(json_path)
    report.save_csv(csv_path)

    exit_code = 0 if report.passed else 1
    manifest = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "config_path": str(config_path),
        "output_dir": str(out),
        "resolved_config": report.config,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "seed_generated": seed_generated,
        "threads": threads,
        "code_version": __version__,
        "timestamp": report.timestamp,
        "artifacts": [json_path.name, csv_path.name],
        "passed": report.passed,
        "exit_status": exit_code,
    }
    manifest_path = out / "run_manifest.json"
    _write_atomic(
        manifest_path,
        json.dumps(manifest, sort_keys=True, indent=2, allow_nan=False) + "\n",
    )

    print(f"experiment   {report.kind}" + (f"  ({experiment.name})" if experiment.name else ""))
    print(f"passed       {'yes' if report.passed else 'NO'}")
    print(f"config hash  {report.config_hash[:12]}")
    seed_note = "  (from entropy)" if seed_generated else ""
    print(f"seed         {report.seed}{seed_note}   threads {threads}")
    print("estimates")
    for entry in report.estimates:
        print(
            f"  {entry['parameter']:<28} {entry['value']:<14.6g} "
            f"+/- {entry['stderr']:.3g}"
        )
    print("verdicts")
    for verdict in report.verdicts:
        tag = "PASS" if verdict["passed"] else "FAIL"
        print(f"  [{tag}] {verdict['name']}: {verdict['detail']}")
    for note in report.notes:
        print(f"note: {note}")
    print("artifacts")
    for artifact in (json_path, csv_path, manifest_path):
        print(f"  {artifact}")
    return exit_code


def _check_options(config: dict) -> dict:
    options = dict(config.get("check", {}))
    unknown = set(options) - {"n0", "window_center", "window_radius", "exponent_margin"}
    if unknown:
        raise CliError(f"unknown check fields {sorted(unknown)}")
    return options


def check_hypotheses(config_path) -> int:
    """Print one pass/fail line per standing hypothesis; return exit code.

    H1 covers the dimension requirement, H2 the growth bound outside a
    ball, H3 the local nondegeneracy window, H4 the exponent
    admissibility arithmetic.
    """
    config = _load_config(config_path)
    family_spec = config.get("family")
    if family_spec is None:
        raise CliError("config field 'family' is required for check")
    try:
        coeffs = build_family(dict(family_spec))
    except CoefficientError as exc:
        raise CliError(f"config field 'family' is invalid: {exc}") from exc
    options = _check_options(config)
    dim = coeffs.dim
    n0 = int(options.get("n0", 1))
    center = np.asarray(
        options.get("window_center", [2.0] + [0.0] * (dim - 1)), dtype=float
    )
    radius = float(options.get("window_radius", 0.5))
    margin = float(options.get("exponent_margin", 1.0))
    alpha = float(family_spec.get("alpha", 0.0))

    rows = []

    try:
        bound = admissible_alpha_bound(dim)
        probes = [center, center + 0.25 * radius, center - 0.25 * radius]
        for point in probes:
            eval_all(coeffs, point)
        rows.append(
            (
                "H1",
                "dimension",
                True,
                f"d = {dim} >= 3; diffusion matrix consistent at "
                f"{len(probes)} probe points",
            )
        )
    except (CoefficientError, EvaluationError) as exc:
        bound = None
        rows.append(("H1", "dimension", False, str(exc)))

    try:
        h2 = check_h2(coeffs, n0)
        if h2.feasible:
            detail = (
                f"max ratio {h2.max_ratio:.6g} <= cap {h2.ratio_cap:g}; "
                f"M* = {h2.m_star:.6g} over {h2.n_samples} samples, "
                f"N0 = {h2.n0}"
            )
        else:
            witness = [round(float(v), 6) for v in h2.witness]
            detail = (
                f"ratio {h2.witness_ratio:.6g} exceeds cap {h2.ratio_cap:g} "
                f"at x = {witness}"
            )
        rows.append(("H2", "growth bound", h2.feasible, detail))
    except (CoefficientError, EvaluationError) as exc:
        rows.append(("H2", "growth bound", False, str(exc)))

    try:
        h3 = check_h3_window(coeffs, center, radius)
        if h3.ok:
            detail = (
                f"{h3.inf_psi:.6g} <= psi <= {h3.sup_psi:.6g} on "
                f"ball(center={[round(float(v), 6) for v in center]}, "
                f"radius={radius:g})"
            )
        else:
            detail = h3.reason
        rows.append(("H3", "local nondegeneracy", h3.ok, detail))
    except (CoefficientError, EvaluationError) as exc:
        rows.append(("H3", "local nondegeneracy", False, str(exc)))

    try:
        selection = select_exponents(dim, alpha, margin)
        bound_text = f"{bound:.6g}" if bound is not None else "n/a"
        detail = (
            f"alpha = {alpha:g} < {bound_text}; q = {selection.q:g}, "
            f"q_tilde = {selection.q_tilde:.6g}"
        )
        if selection.alpha_zero:
            detail += " (alpha = 0 limiting choice)"
        rows.append(("H4", "exponents", True, detail))
    except CoefficientError as exc:
        rows.append(("H4", "exponents", False, str(exc)))

    all_ok = True
    for tag, label, ok, detail in rows:
        status = "PASS" if ok else "FAIL"
        print(f"{tag} {label:<22} {status}  {detail}")
        all_ok &= ok
    return 0 if all_ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degensde",
        description="Run degenerate-diffusion experiments and hypothesis checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one experiment from a config file")
    run_parser.add_argument("config", help="path to a JSON experiment config")
    run_parser.add_argument("--seed", type=int, default=None, help="override the seed")
    run_parser.add_argument(
        "--threads", type=int, default=1, help="worker threads (results are identical)"
    )
    run_parser.add_argument("--out", default=".", help="output directory")
    run_parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry via dotted path, e.g. sim.step=0.0005",
    )

    check_parser = sub.add_parser(
        "check", help="print the hypothesis checklist for the configured family"
    )
    check_parser.add_argument("config", help="path to a JSON experiment config")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run(
                args.config,
                seed=args.seed,
                threads=args.threads,
                out_dir=args.out,
                overrides=args.override,
            )
        return check_hypotheses(args.config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
