import logging

import click

from commands.common import handle_errors, load_run, run_options
from exceptions import VerificationFailedError
from services.pipeline_service import StabilizationPipeline
from services.report_export_service import ReportExportService

logger = logging.getLogger(__name__)


@click.command("verify")
@run_options
@click.option("--corrupt-c", is_flag=True, hidden=True, help="Zero C before checking.")
@handle_errors
def verify_command(config_path, out_dir, seed, corrupt_c):
    """Check every closed-loop identity and write verification.json."""
    run = load_run(config_path, seed)
    report = StabilizationPipeline(run).run_verify(corrupt_c=corrupt_c)
    ReportExportService(out_dir or run.out_dir).write_json("verification.json", report.to_dict())
    logger.info(f"verify: {len(report.residuals)} residuals, {len(report.failed)} failed")

    if not report.passed:
        raise VerificationFailedError(
            f"identities failed: {', '.join(report.failed)}", failed=report.failed
        )
