import logging

import click

from commands.common import handle_errors, load_run, run_options
from exceptions import DecayViolationError
from services.pipeline_service import StabilizationPipeline
from services.report_export_service import ReportExportService

logger = logging.getLogger(__name__)


@click.command("gramian")
@run_options
@handle_errors
def gramian_command(config_path, out_dir, seed):
    """Build Lambda_omega, C and F and write gramian.json."""
    run = load_run(config_path, seed)
    report = StabilizationPipeline(run).run_gramian()
    ReportExportService(out_dir or run.out_dir).write_json("gramian.json", report)
    logger.info(
        f"gramian: cond(Lambda)={report['cond_lambda']:.3e}, "
        f"Riccati residual={report['riccati_residual']:.3e}"
    )


@click.command("stabilize")
@run_options
@handle_errors
def stabilize_command(config_path, out_dir, seed):
    """Simulate the closed loop and write trajectory.csv and stabilize.json."""
    run = load_run(config_path, seed)
    result = StabilizationPipeline(run).run_stabilize()

    exporter = ReportExportService(out_dir or run.out_dir)
    exporter.write_trajectory(result)
    exporter.write_json("stabilize.json", {"run": run.to_dict(), **result.to_dict()})

    if not result.decay_report.passed:
        raise DecayViolationError(
            f"decay bound violated beyond tolerance: {', '.join(result.decay_report.failed)}"
        )


@click.command("sweep")
@run_options
@handle_errors
def sweep_command(config_path, out_dir, seed):
    """Stabilize once per omega and write sweep.csv and sweep.xlsx."""
    run = load_run(config_path, seed)
    pipeline = StabilizationPipeline(run)
    results = pipeline.run_sweep()

    exporter = ReportExportService(out_dir or run.out_dir)
    exporter.write_sweep(results)
    exporter.write_sweep_workbook(
        results,
        {
            "system": results[0].system.name,
            "T": run.T,
            "quadrature_order": run.quadrature_order,
            "seed": run.seed,
            "exact_stepping": run.stabilizer_config().exact_stepping,
        },
    )

    violations = pipeline.sweep_violations(results)
    logger.info(f"sweep: {len(results)} rows, {len(violations)} below the prescribed rate")
    if violations:
        raise DecayViolationError(f"decay rate below omega for omega in {violations}")
