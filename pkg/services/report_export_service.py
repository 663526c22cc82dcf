import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from services.pipeline_service import SUMMARY_COLUMNS, StabilizeResult
from utils.helpers import format_float

logger = logging.getLogger(__name__)


def _json_safe(value):
    """Replace non-finite floats by their string names so the JSON stays strict."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


class ReportExportService:
    """
    Writes run reports to an output directory.

    JSON reports and CSV tables are UTF-8 with LF line endings and a fixed
    column order; numbers are written in shortest round-trip form so reruns
    reproduce them byte for byte.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    def _path(self, filename: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / filename

    def write_json(self, filename: str, payload: Dict[str, object]) -> Path:
        path = self._path(filename)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            json.dump(_json_safe(payload), handle, indent=2, allow_nan=False)
            handle.write("\n")
        logger.info(f"Report written: {path}")
        return path

    def write_csv(
        self, filename: str, header: Sequence[str], rows: List[Sequence[Optional[float]]]
    ) -> Path:
        """
        Write a numeric table; None becomes an empty cell.

        Raises:
            DomainError: If a cell is NaN or infinite
        """
        path = self._path(filename)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(["" if value is None else format_float(value) for value in row])
        logger.info(f"Table written: {path} ({len(rows)} rows)")
        return path

    def write_trajectory(self, result: StabilizeResult) -> Path:
        """trajectory.csv: t, x_1..x_n, omega_norm, bound."""
        n = result.system.state_dim
        header = ["t", *[f"x_{i}" for i in range(1, n + 1)], "omega_norm", "bound"]
        return self.write_csv("trajectory.csv", header, result.trajectory.to_rows(result.bundle.omega))

    @staticmethod
    def _summary_rows(results: List[StabilizeResult]) -> List[List[Optional[float]]]:
        """Summary values in column order; None marks a degenerate decay fit."""
        return [[result.summary[column] for column in SUMMARY_COLUMNS] for result in results]

    def write_sweep(self, results: List[StabilizeResult]) -> Path:
        """sweep.csv in the fixed summary column order, one row per omega."""
        return self.write_csv("sweep.csv", SUMMARY_COLUMNS, self._summary_rows(results))

    def write_sweep_workbook(self, results: List[StabilizeResult], metadata: Dict[str, object]) -> Path:
        """sweep.xlsx: the sweep table with a styled header and a metadata block."""
        rows = self._summary_rows(results)
        wb = Workbook()
        ws = wb.active
        ws.title = "Decay rate sweep"

        styles = self._get_excel_styles()
        last_column = get_column_letter(len(SUMMARY_COLUMNS))
        ws.merge_cells(f"A1:{last_column}1")
        title_cell = ws["A1"]
        title_cell.value = f"Decay rate sweep - {metadata.get('system', 'system')}"
        title_cell.font = Font(bold=True, size=14)
        title_cell.alignment = Alignment(horizontal="center", vertical="center")

        for column, name in enumerate(SUMMARY_COLUMNS, start=1):
            cell = ws.cell(row=3, column=column, value=name)
            cell.font = styles["header_font"]
            cell.fill = styles["header_fill"]
            cell.alignment = styles["header_alignment"]
            cell.border = styles["header_border"]

        for offset, values in enumerate(rows):
            for column, value in enumerate(values, start=1):
                number = None if value is None else float(value)
                cell = ws.cell(row=4 + offset, column=column, value=number)
                cell.alignment = styles["number_alignment"]
                cell.border = styles["cell_border"]
                cell.number_format = "0.000000E+00"

        metadata_row = 4 + len(rows) + 2
        for offset, (key, value) in enumerate(metadata.items()):
            ws.cell(row=metadata_row + offset, column=1, value=f"{key}:").font = Font(bold=True)
            ws.cell(row=metadata_row + offset, column=2, value=value)

        self._adjust_column_widths(ws)

        path = self._path("sweep.xlsx")
        wb.save(path)
        logger.info(f"Workbook written: {path}")
        return path

    def _get_excel_styles(self) -> dict:
        thin = Side(style="thin", color="000000")
        light = Side(style="thin", color="CCCCCC")
        return {
            "header_font": Font(bold=True, color="FFFFFF"),
            "header_fill": PatternFill(start_color="366092", end_color="366092", fill_type="solid"),
            "header_alignment": Alignment(horizontal="center", vertical="center"),
            "header_border": Border(left=thin, right=thin, top=thin, bottom=thin),
            "number_alignment": Alignment(horizontal="right", vertical="center"),
            "cell_border": Border(left=light, right=light, top=light, bottom=light),
        }

    def _adjust_column_widths(self, ws):
        for column in ws.iter_cols(min_row=3):
            width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            ws.column_dimensions[get_column_letter(column[0].column)].width = min(width + 2, 50)
