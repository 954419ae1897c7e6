'''This module defines the command line interface for semicox.
'''
import os
import pickle
import platform
import warnings
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import click
import click_config_file
import joblib
import numpy as np
import pandas as pd
import scipy
import sklearn

from . import __version__
from .backfit import FitConfig, FitResult, fit
from .beta_solver import ExpansionMode, PenaltyKind, PenaltySpec
from .core import ColumnSchema, SurvivalDataset, as_parametric, load_dataset
from .eta_solver import eta_band
from .exceptions import ConvergenceError, SemicoxError
from .inference import sandwich_cov
from .kl_select import (FEASIBLE_RATIO, diagnose as kl_diagnose,
                        reports_to_frame, select_structure)
from .monitor import Monitor
from .simulator import Procedure, Simulator, get_scenario, scenario_names
from .spline import format_structure, parse_structure


def save_events(output_prefix: str, output_dir: str, events: List[str]):
    '''Saves a detailed event list'''
    with open(f'{output_dir}/{output_prefix}_events.csv', 'w') as f_evs:
        f_evs.write('time,event,fields\n')
        for ev in events:
            f_evs.write(f'{ev}\n')


def save_manifest(output_prefix: str, output_dir: str, command: str,
                  params: Dict):
    '''Saves the resolved options as "key = value" lines, followed by the
    package versions. The file can be passed back with --config to repeat the
    run.'''
    versions = {'semicox_version': __version__,
                'python_version': platform.python_version(),
                'numpy_version': np.__version__,
                'scipy_version': scipy.__version__,
                'pandas_version': pd.__version__,
                'sklearn_version': sklearn.__version__,
                'joblib_version': joblib.__version__}
    with open(f'{output_dir}/{output_prefix}_manifest.txt', 'w') as f_man:
        f_man.write(f'# semicox {command}\n')
        for key, value in params.items():
            if value is None or key == 'config':
                continue
            if isinstance(value, str):
                value = f'"{value}"'
            f_man.write(f'{key} = {value}\n')
        for key, value in versions.items():
            f_man.write(f'{key} = {value}\n')


def _names(text: Optional[str]) -> Optional[Tuple[str, ...]]:
    if text is None:
        return None
    return tuple(c.strip() for c in text.split(',') if c.strip())


def _grid(text: Optional[str]) -> Optional[Tuple[float, ...]]:
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(','))
    except ValueError as err:
        raise click.BadParameter(f'invalid number list "{text}"') from err


def _load(data, time, status, parametric, nonparametric) -> SurvivalDataset:
    schema = ColumnSchema(time=time, status=status,
                          nonparametric=_names(nonparametric),
                          parametric=_names(parametric))
    return load_dataset(data, schema)


def _fit_config(ds: SurvivalDataset, penalty, structure, lam, lambda_grid,
                theta_grid, expansion, max_iter, tol, seed) -> FitConfig:
    return FitConfig(
        penalty=PenaltySpec(PenaltyKind(penalty)),
        structure=None if structure is None else
        parse_structure(structure, ds.w_names),
        lam=lam, lambda_grid=_grid(lambda_grid), theta_grid=_grid(theta_grid),
        max_iter=max_iter, tol=tol, expansion=ExpansionMode(expansion),
        seed=seed)


def coefficient_table(result: FitResult) -> pd.DataFrame:
    '''Estimates and sandwich standard errors of the parametric part'''
    ds = result.dataset
    try:
        errors = sandwich_cov(result).standard_errors
    except ConvergenceError as err:
        warnings.warn(f'standard errors not available: {err}')
        errors = np.full(ds.d, np.nan)
    return pd.DataFrame({'coefficient': list(ds.u_names),
                         'estimate': result.beta,
                         'se': errors,
                         'nonzero': result.beta != 0})


def eta_table(result: FitResult, level: float) -> pd.DataFrame:
    '''eta with its pointwise band on the default grid, with the grid also in
    the original scale of W'''
    ds = result.dataset
    band = eta_band(result.eta_fit, level=level)
    grid = band[[f'w{j + 1}' for j in range(ds.q)]].to_numpy()
    original = ds.w_original(grid)
    for j, name in enumerate(ds.w_names):
        band.insert(ds.q + j, name if name not in band else f'{name}_orig',
                    original[:, j])
    return band


def fit_report(result: FitResult, coefs: pd.DataFrame) -> str:
    ds = result.dataset
    lines = [f'Observations: {ds.n}. Failures: {ds.n_failures}. '
             f'Censoring rate: {ds.censoring_rate:.3f}',
             f'Penalty: {result.config.penalty.kind.value}. '
             f'Structure: {format_structure(result.structure)}',
             f'Lambda: {result.lam:.4g}. Theta: {result.theta:.4g}',
             f'Iterations: {result.iterations}. '
             f'Converged: {result.converged}',
             f'Nonzero coefficients: {int(coefs.nonzero.sum())} of {ds.d}']
    zeroed = coefs.coefficient[~coefs.nonzero].tolist()
    lines.append(f'Zeroed: {", ".join(zeroed) if zeroed else "none"}')
    lines.append('')
    lines.append(coefs.to_string(index=False))
    return '\n'.join(lines)


def data_options(func):
    '''Options for reading a data file'''
    options = [
        click.option('--data', type=click.Path(exists=True, dir_okay=False),
                     required=True, help='CSV file with a header row'),
        click.option('--time', type=str, required=True,
                     help='Column with the follow-up times'),
        click.option('--status', type=str, required=True,
                     help='Column with the failure indicator (1 failure, 0 '
                     'censored)'),
        click.option('--nonparametric', type=str, required=True,
                     help='Comma-separated columns modelled nonparametrically '
                     '(1 or 2)'),
        click.option('--parametric', type=str, required=False,
                     help='Comma-separated parametric columns. If missing, '
                     'all the other columns are used'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def fit_options(func):
    '''Options of the backfitting algorithm'''
    options = [
        click.option('--structure', type=str, required=False,
                     help='ANOVA terms of eta, e.g. "w1+w2" or "w1*w2". If '
                     'missing, all the main effects'),
        click.option('--lam', type=click.FloatRange(min=0, min_open=True),
                     required=False,
                     help='Fixed smoothing parameter. If missing, it is '
                     'selected with the RKL score'),
        click.option('--lambda-grid', type=str, required=False,
                     help='Comma-separated candidate smoothing parameters'),
        click.option('--theta-grid', type=str, required=False,
                     help='Comma-separated candidate penalty parameters'),
        click.option('--expansion', type=click.Choice(
            [m.value for m in ExpansionMode]), default='profile',
            show_default=True,
            help='Expansion point of the one-step update'),
        click.option('--max-iter', type=click.IntRange(min=1), default=20,
                     show_default=True, help='Backfitting iterations'),
        click.option('--tol', type=click.FloatRange(min=0, min_open=True),
                     default=1e-4, show_default=True,
                     help='Tolerance of the backfitting changes'),
        click.option('--seed', type=int, default=0, show_default=True,
                     help='Seed for the knot selection'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def output_options(func):
    func = click.option('--output-dir', type=click.Path(file_okay=False),
                        required=True, help='Output directory')(func)
    func = click.option('--output-prefix', type=str, required=True,
                        help='Prefix of the output files')(func)
    return func


@click.group()
@click.version_option(__version__)
def main():
    '''Partly linear Cox models with penalized variable selection.'''


# pylint: disable=no-value-for-parameter,too-many-arguments
@main.command('fit')
@data_options
@click.option('--penalty', type=click.Choice([k.value for k in PenaltyKind]),
              default='scad', show_default=True,
              help='Penalty on the parametric coefficients')
@fit_options
@click.option('--level', type=click.FloatRange(0, 1, min_open=True,
                                               max_open=True),
              default=0.95, show_default=True, help='Level of the eta band')
@output_options
@click_config_file.configuration_option(implicit=False)
@click.pass_context
def fit_command(ctx, data, time, status, nonparametric, parametric, penalty,
                structure, lam, lambda_grid, theta_grid, expansion, max_iter,
                tol, seed, level, output_prefix, output_dir):
    '''Fits a partly linear Cox model to a CSV file'''
    os.makedirs(output_dir, exist_ok=True)
    monitor = Monitor()
    monitor.start_run()
    try:
        ds = _load(data, time, status, parametric, nonparametric)
        config = _fit_config(ds, penalty, structure, lam, lambda_grid,
                             theta_grid, expansion, max_iter, tol, seed)
        result = fit(ds, config, monitor=monitor, label=output_prefix)
        coefs = coefficient_table(result)
        band = eta_table(result, level)
    except SemicoxError as err:
        raise click.ClickException(str(err)) from err
    monitor.end_run()

    report = fit_report(result, coefs)
    with open(f'{output_dir}/{output_prefix}_out.txt', 'w') as f_out:
        f_out.write(f'Fit of {data}\n{report}\n\n{monitor.get_stats()}\n')
    click.echo(report)

    summary = {'data': data, 'n': ds.n, 'failures': ds.n_failures,
               'penalty': penalty,
               'structure': format_structure(result.structure),
               'lambda': result.lam, 'theta': result.theta,
               'iterations': result.iterations,
               'converged': result.converged,
               'nonzero': int(coefs.nonzero.sum()),
               'loglik': result.beta_fit.loglik,
               'aic': result.beta_fit.aic}
    pd.Series(summary).to_csv(f'{output_dir}/{output_prefix}.csv',
                              header=False)
    coefs.to_csv(f'{output_dir}/{output_prefix}_coef.csv', index=False)
    band.to_csv(f'{output_dir}/{output_prefix}_eta.csv', index=False)
    result.trace_frame().to_csv(f'{output_dir}/{output_prefix}_trace.csv',
                                index=False)
    with open(f'{output_dir}/{output_prefix}_fit.p', 'wb') as f_fit:
        pickle.dump(result, f_fit)
    save_manifest(output_prefix, output_dir, 'fit', ctx.params)
    save_events(output_prefix, output_dir, monitor.get_events())


@main.command('simulate')
@click.option('--scenario', type=click.Choice(scenario_names()),
              required=True, help='Simulation scenario')
@click.option('--n', 'size', type=click.IntRange(min=2), required=False,
              help='Sample size. If missing, the one of the scenario')
@click.option('--eta0', type=str, required=False,
              help='True eta, e.g. "0.7*eta0a(w1)+0.3*eta0b(w2)". If '
              'missing, the one of the scenario')
@click.option('--censoring', type=click.FloatRange(0, 1, max_open=True),
              required=False,
              help='Censoring rate. If missing, the one of the scenario')
@click.option('--procedures', type=str, default='MA,MB,MC,MD',
              show_default=True,
              help='Comma-separated procedures compared with M0')
@click.option('--replicates', type=click.IntRange(min=1), default=100,
              show_default=True, help='Number of replicates')
@click.option('--jobs', type=int, default=-1, show_default=True,
              help='Parallel workers (-1 for all the cores)')
@click.option('--seed', type=int, default=0, show_default=True,
              help='Master seed')
@click.option('--mc-size', type=click.IntRange(min=10_000), default=10_000,
              show_default=True,
              help='Covariate sample size for the model errors')
@click.option('--level', type=click.FloatRange(0, 1, min_open=True,
                                               max_open=True),
              default=0.95, show_default=True, help='Level of the eta bands')
@click.option('--progress/--no-progress', default=True,
              help='Print progress lines')
@output_options
@click_config_file.configuration_option(implicit=False)
@click.pass_context
def simulate_command(ctx, scenario, size, eta0, censoring, procedures,
                     replicates, jobs, seed, mc_size, level, progress,
                     output_prefix, output_dir):
    '''Runs a Monte-Carlo benchmark of the estimation procedures'''
    os.makedirs(output_dir, exist_ok=True)
    try:
        procs = [Procedure(p.upper()) for p in _names(procedures)]
    except ValueError as err:
        raise click.BadParameter(str(err), param_hint='--procedures') \
            from err
    try:
        sc = get_scenario(scenario, size, eta0, censoring)
        simulator = Simulator()
        tables = simulator.run_table(sc, procs, replicates=replicates,
                                     jobs=jobs, seed=seed, mc_size=mc_size,
                                     level=level, progress=progress)
    except (SemicoxError, ValueError) as err:
        raise click.ClickException(str(err)) from err

    stats = simulator.get_stats()
    with open(f'{output_dir}/{output_prefix}_out.txt', 'w') as f_out:
        f_out.write(f'Scenario {sc.name}: n={sc.n}, eta0={sc.eta0}, '
                    f'censoring={sc.censor_target}, '
                    f'censoring rate parameter={simulator.censoring_rate:.6g}'
                    f'\n{stats}\n\n')
        f_out.write(tables.summary.to_string(index=False))
        f_out.write('\n')
    click.echo(tables.summary.to_string(index=False))

    prefix = f'{output_dir}/{output_prefix}'
    tables.summary.to_csv(f'{prefix}_summary.csv', index=False)
    tables.replicates.to_csv(f'{prefix}_replicates.csv', index=False)
    tables.eta.to_csv(f'{prefix}_eta.csv', index=False)
    tables.se.to_csv(f'{prefix}_se.csv', index=False)
    tables.selection.to_csv(f'{prefix}_np.csv', index=False)
    save_manifest(output_prefix, output_dir, 'simulate', ctx.params)
    save_events(output_prefix, output_dir, simulator.get_events())


@main.command('diagnose')
@click.option('--fit-file', type=click.Path(exists=True, dir_okay=False),
              required=True, help='Fit file written by "semicox fit"')
@click.option('--candidates', type=str, required=True,
              help='Semicolon-separated reduced structures, e.g. '
              '"w1+w2;w1;const"')
@click.option('--threshold', type=click.FloatRange(0, 1, min_open=True),
              default=FEASIBLE_RATIO, show_default=True,
              help='Largest feasible KL ratio')
@output_options
@click_config_file.configuration_option(implicit=False)
@click.pass_context
def diagnose_command(ctx, fit_file, candidates, threshold, output_prefix,
                     output_dir):
    '''Checks reduced ANOVA structures of a fit with KL ratios'''
    os.makedirs(output_dir, exist_ok=True)
    with open(fit_file, 'rb') as f_fit:
        result = pickle.load(f_fit)
    if not isinstance(result, FitResult):
        raise click.ClickException(f'{fit_file} does not contain a fit')
    try:
        structures = [parse_structure(c, result.dataset.w_names)
                      for c in candidates.split(';')]
        reports = kl_diagnose(result, structures, threshold)
    except SemicoxError as err:
        raise click.ClickException(str(err)) from err

    selected = select_structure(reports, result.structure)
    frame = reports_to_frame(reports)
    frame.to_csv(f'{output_dir}/{output_prefix}_kl.csv', index=False)
    text = (f'Fitted structure: {format_structure(result.structure)}\n'
            f'{frame.to_string(index=False)}\n'
            f'Selected structure: {format_structure(selected)}')
    with open(f'{output_dir}/{output_prefix}_out.txt', 'w') as f_out:
        f_out.write(f'{text}\n')
    click.echo(text)
    save_manifest(output_prefix, output_dir, 'diagnose', ctx.params)


COMPARED_MODELS = (('semiparametric', 'scad'), ('semiparametric', 'alasso'),
                   ('parametric', 'scad'), ('parametric', 'alasso'))


@main.command('compare')
@data_options
@fit_options
@output_options
@click_config_file.configuration_option(implicit=False)
@click.pass_context
def compare_command(ctx, data, time, status, nonparametric, parametric,
                    structure, lam, lambda_grid, theta_grid, expansion,
                    max_iter, tol, seed, output_prefix, output_dir):
    '''Fits the semiparametric and the parametric relative risk models with
    both penalties and writes their coefficients side by side'''
    os.makedirs(output_dir, exist_ok=True)
    monitor = Monitor()
    monitor.start_run()
    columns = {}
    summary = []
    try:
        ds = _load(data, time, status, parametric, nonparametric)
        for model, penalty in COMPARED_MODELS:
            if model == 'parametric':
                model_ds = as_parametric(ds)
                config = _fit_config(model_ds, penalty, None, lam,
                                     lambda_grid, theta_grid, expansion,
                                     max_iter, tol, seed)
                config = replace(config, structure=())
            else:
                model_ds = ds
                config = _fit_config(ds, penalty, structure, lam, lambda_grid,
                                     theta_grid, expansion, max_iter, tol,
                                     seed)
            label = f'{model}_{penalty}'
            result = fit(model_ds, config, monitor=monitor, label=label)
            coefs = coefficient_table(result).set_index('coefficient')
            columns[label] = coefs.estimate
            columns[f'{label}_se'] = coefs.se
            summary.append({'model': label,
                            'structure': format_structure(result.structure),
                            'nonzero': int(coefs.nonzero.sum()),
                            'loglik': result.beta_fit.loglik,
                            'aic': result.beta_fit.aic,
                            'iterations': result.iterations,
                            'converged': result.converged})
    except SemicoxError as err:
        raise click.ClickException(str(err)) from err
    monitor.end_run()

    table = pd.DataFrame(columns, index=list(as_parametric(ds).u_names))
    table.index.name = 'coefficient'
    table.to_csv(f'{output_dir}/{output_prefix}_coef.csv')
    models = pd.DataFrame(summary)
    models.to_csv(f'{output_dir}/{output_prefix}.csv', index=False)
    with open(f'{output_dir}/{output_prefix}_out.txt', 'w') as f_out:
        f_out.write(f'Comparison of models for {data}\n')
        f_out.write(f'{models.to_string(index=False)}\n\n')
        f_out.write(f'{table.to_string()}\n\n{monitor.get_stats()}\n')
    click.echo(models.to_string(index=False))
    save_manifest(output_prefix, output_dir, 'compare', ctx.params)
    save_events(output_prefix, output_dir, monitor.get_events())


if __name__ == "__main__":
    main()
