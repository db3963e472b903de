"""Command-line interface: pure bound evaluation, verification runs, exact
enumeration, and report conversion.

Exit codes: 0 all verdicts pass or are vacuous, 1 violation evidence found,
2 configuration error.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .bounds import BOUND_KINDS, BoundSpec, RateInputs, clamp_probability, evaluate_bound
from .experiments import (
    SpecValidationError,
    any_violation,
    emit_plot_data,
    emit_report,
    load_report,
    load_spec,
    render_report,
    run_experiment,
)

SEED_ENV = "SELFNORM_SEED"

_INT_PARAMS = {"n", "d"}


@click.group()
def main():
    """Tail bounds for self-normalized martingales and their empirical verification."""


@main.group()
def bounds():
    """Closed-form bound calculators (no simulation)."""


@bounds.command("eval")
@click.argument("kind")
@click.argument("params", nargs=-1)
@click.option("--clamp", is_flag=True, help="Clamp the result into [0, 1].")
def bounds_eval(kind, params, clamp):
    """Evaluate one bound KIND at PARAMS given as name=value pairs.

    Example: selfnorm bounds eval freedman x=1 L=1 a_bnd=0
    """
    if kind not in BOUND_KINDS:
        raise click.ClickException(f"unknown kind {kind!r}; choose from: {', '.join(BOUND_KINDS)}")
    kwargs = {}
    for item in params:
        if "=" not in item:
            raise click.ClickException(f"parameter {item!r} is not name=value")
        name, raw = item.split("=", 1)
        try:
            kwargs[name] = int(raw) if name in _INT_PARAMS else float(raw)
        except ValueError:
            raise click.ClickException(f"parameter {name}: bad number {raw!r}")
    try:
        value = evaluate_bound(BoundSpec(kind, RateInputs(**kwargs)))
    except (TypeError, ValueError) as exc:
        raise click.ClickException(str(exc))
    if clamp:
        value = clamp_probability(value)
    click.echo(format(value, ".17g"))


def _apply_overrides(raw: dict, seed, reps) -> dict:
    raw = dict(raw)
    if seed is not None:
        raw["master_seed"] = seed
    elif "master_seed" not in raw and os.environ.get(SEED_ENV):
        try:
            raw["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise click.ClickException(f"{SEED_ENV} must be an integer")
    if reps is not None:
        raw["n_rep"] = reps
    return raw


def _run_and_emit(spec_path, seed, reps, fmt, out, plot_data, jobs, timing, force_mode=None):
    try:
        with open(spec_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except json.JSONDecodeError as exc:
        click.echo(f"config error: spec parse failed: {exc}", err=True)
        sys.exit(2)
    raw = _apply_overrides(raw, seed, reps)
    if force_mode is not None:
        raw["mode"] = force_mode
    try:
        spec = load_spec(raw)
    except SpecValidationError as exc:
        for err in exc.errors:
            click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    try:
        records = run_experiment(spec, jobs=jobs)
    except Exception as exc:
        # exit code 1 is reserved for violation evidence
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    if out is None:
        click.echo(render_report(records, fmt, spec=spec, include_timing=timing), nl=False)
    else:
        emit_report(records, fmt, out, spec=spec, include_timing=timing)
    if plot_data:
        if out is None:
            click.echo("config error: --emit-plot-data needs --out", err=True)
            sys.exit(2)
        emit_plot_data(records, str(out) + ".plot.csv")
    sys.exit(1 if any_violation(records) else 0)


_verify_options = [
    click.option("--spec", "spec_path", required=True, type=click.Path(exists=False)),
    click.option("--seed", type=click.IntRange(min=0), default=None,
                 help=f"Master seed; falls back to the spec file then ${SEED_ENV}."),
    click.option("--reps", type=click.IntRange(min=100), default=None, help="Override n_rep."),
    click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json"),
    click.option("--out", type=click.Path(), default=None, help="Report path (stdout if absent)."),
    click.option("--emit-plot-data", "plot_data", is_flag=True,
                 help="Also write <out>.plot.csv with (x, p_hat, ci_hi, bound) rows."),
    click.option("--jobs", type=click.IntRange(min=1), default=1,
                 help="Concurrent grid points; output is identical at any value."),
    click.option("--timing", is_flag=True,
                 help="Include wall_ms in the report (breaks byte-identical re-runs)."),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


@main.command()
@_with_options(_verify_options)
def verify(spec_path, seed, reps, fmt, out, plot_data, jobs, timing):
    """Run a verification spec and emit a report."""
    _run_and_emit(spec_path, seed, reps, fmt, out, plot_data, jobs, timing)


@main.command()
@_with_options(_verify_options)
def oracle(spec_path, seed, reps, fmt, out, plot_data, jobs, timing):
    """Run a spec through the exact enumeration oracle only."""
    _run_and_emit(
        spec_path, seed, reps, fmt, out, plot_data, jobs, timing, force_mode="exact_oracle"
    )


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="JSON report produced by verify/oracle.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--timing", is_flag=True, help="Keep wall_ms values if present.")
def report(in_path, fmt, out, timing):
    """Convert a JSON report to CSV (or re-canonicalize JSON)."""
    try:
        spec_dict, records = load_report(in_path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        click.echo(f"config error: cannot read report: {exc}", err=True)
        sys.exit(2)
    spec = None
    if spec_dict is not None:
        try:
            spec = load_spec(spec_dict)
        except SpecValidationError:
            spec = None
    emit_report(records, fmt, out, spec=spec, include_timing=timing)
    sys.exit(0)


if __name__ == "__main__":
    main()
