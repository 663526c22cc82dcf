from .gramian_service import GramianService
from .closed_loop_service import ClosedLoopService
from .system_builder_service import SystemBuilderService
from .pipeline_service import StabilizationPipeline
from .report_export_service import ReportExportService


__all__ = [
    "ClosedLoopService",
    "GramianService",
    "ReportExportService",
    "StabilizationPipeline",
    "SystemBuilderService",
]
