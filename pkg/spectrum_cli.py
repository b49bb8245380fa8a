"""Command-line entry point of the spectrum poisoning simulator."""

import json
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import click
from tqdm import tqdm

# Add backend to path
sys.path.append(str(Path(__file__).parent))

from backend.config import (
    ATTACK_KINDS,
    ScenarioConfig,
    apply_overrides,
    configure_logging,
    load_scenario,
    reference_default,
    validate,
)
from backend.harness import (
    ExperimentSpec,
    collect_transmitter_data,
    run_channel_sweep,
    run_defense_sweep,
    run_experiment,
    run_location_sweep,
    run_mobility_sweep,
    run_multisource_comparison,
)
from backend.hyperopt import SearchSpace, tune as tune_hyperparams
from backend.report import emit_report, load_report

DEFAULT_PD_GRID = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8)


def _scenario(path: Optional[str], overrides: Sequence[str]) -> ScenarioConfig:
    config = load_scenario(path) if path else reference_default()
    return apply_overrides(config, list(overrides))


def _format_for(out: Optional[str], fmt: Optional[str]) -> str:
    if fmt:
        return fmt
    if out and Path(out).suffix.lower() == ".json":
        return "json"
    return "csv"


def _progress_bar(total: int, desc: str):
    bar = tqdm(total=total, desc=desc, unit="seed")

    def update(done: int, _total: int) -> None:
        bar.n = done
        bar.refresh()
        if done >= _total:
            bar.close()

    return update


def _write(table, out: Optional[str], fmt: Optional[str]) -> None:
    text = emit_report(table, _format_for(out, fmt), out)
    if out is None:
        click.echo(text)
    else:
        click.echo(f"Results written to {out}", err=True)


scenario_option = click.option("--scenario", type=click.Path(exists=True, dir_okay=False), default=None,
                               help="Scenario JSON file (default: the reference topology).")
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                          help="Dotted-path override, e.g. channel_model.kind=rayleigh. Repeatable.")
seeds_option = click.option("--seeds", type=int, default=20, show_default=True, help="Number of replications.")
seed_start_option = click.option("--seed-start", type=int, default=0, show_default=True, help="First seed.")
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None,
                          help="Output file; .json selects JSON, anything else CSV. Default: stdout.")
format_option = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                             help="Force the output format.")


@click.group()
@click.option("--log-level", default=None, help="Overrides SPECTRUM_SIM_LOG_LEVEL.")
def main(log_level: Optional[str]):
    """Adversarial attacks and defenses on learning-based spectrum access."""
    configure_logging(log_level)


@main.command()
@scenario_option
@set_option
@click.option("--attack", "attacks", multiple=True, type=click.Choice(ATTACK_KINDS), default=("none",),
              show_default=True, help="Attack cell. Repeatable.")
@click.option("--defense-pd", "defense_levels", multiple=True, type=float, default=(0.0,), show_default=True,
              help="Defense level P_d. Repeatable.")
@seeds_option
@seed_start_option
@out_option
@format_option
def simulate(scenario, overrides, attacks, defense_levels, seeds, seed_start, out, fmt):
    """Run attack/defense cells over seeded replications and emit the summary table."""
    try:
        spec = ExperimentSpec(
            scenario=_scenario(scenario, overrides),
            attacks=tuple(attacks),
            defense_levels=tuple(defense_levels),
            seeds=tuple(range(seed_start, seed_start + seeds)),
        )
        result = run_experiment(spec, _progress_bar(seeds, "simulate"))
        _write(result, out, fmt)
    except (ValueError, OSError) as e:
        raise click.ClickException(str(e))


@main.command()
@scenario_option
@set_option
@click.option("--method", type=click.Choice(["sequential", "hyperband"]), default="sequential", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def tune(scenario, overrides, method, seed):
    """Search C_T's hyperparameters on one collection trace and print the result as JSON."""
    try:
        config = validate(replace(_scenario(scenario, overrides), seed=seed))
        world, _, train, validation = collect_transmitter_data(config)
        space = SearchSpace.around(config.transmitter_hyperparams)
        result = tune_hyperparams(space, train, validation, world.streams.stream("tune:transmitter"), method)
    except (ValueError, OSError) as e:
        raise click.ClickException(str(e))
    click.echo(json.dumps({"method": method, "hyperparams": asdict(result.hyperparams),
                           "objective": result.objective}, indent=2))


SWEEPS = ("attacks", "defense", "channel", "location", "mobility", "multisource")


@main.command()
@click.argument("kind", type=click.Choice(SWEEPS))
@scenario_option
@set_option
@seeds_option
@seed_start_option
@click.option("--pd-grid", multiple=True, type=float, default=DEFAULT_PD_GRID, show_default=True,
              help="Defense levels for the defense sweep. Repeatable.")
@out_option
@format_option
def sweep(kind, scenario, overrides, seeds, seed_start, pd_grid, out, fmt):
    """
    Reproduce one of the result tables.

    attacks: every attack at P_d 0; defense: evasion over a P_d grid; channel, location,
    mobility, multisource: C_T's error under the given variation.
    """
    try:
        config = _scenario(scenario, overrides)
        seed_list = tuple(range(seed_start, seed_start + seeds))
        if kind == "attacks":
            spec = ExperimentSpec(scenario=config, attacks=ATTACK_KINDS, defense_levels=(0.0,), seeds=seed_list)
            table = run_experiment(spec, _progress_bar(seeds, "attacks")).summary()
        elif kind == "defense":
            result, best = run_defense_sweep(config, tuple(pd_grid), seed_list, _progress_bar(seeds, "defense"))
            table = result.summary()
            click.echo(f"Best defense level: P_d = {best:g}", err=True)
        elif kind == "channel":
            table = run_channel_sweep(config, seed_list)
        elif kind == "location":
            table = run_location_sweep(config, seed_list)
        elif kind == "mobility":
            table = run_mobility_sweep(config, seed_list)
        else:
            table = run_multisource_comparison(config, seed_list)
        _write(table, out, fmt)
    except (ValueError, OSError) as e:
        raise click.ClickException(str(e))


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@out_option
@format_option
def report(path, out, fmt):
    """Re-render a stored JSON report."""
    try:
        table = load_report(Path(path))
        _write(table, out, fmt)
    except (ValueError, OSError) as e:
        raise click.ClickException(str(e))


if __name__ == "__main__":
    main()
