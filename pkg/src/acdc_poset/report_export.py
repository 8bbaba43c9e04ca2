from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
from openpyxl import Workbook
from openpyxl.chart import LineChart, Reference
from openpyxl.formatting.rule import FormulaRule
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

if TYPE_CHECKING:
    from .pipeline import ExperimentResult


BODY_FONT = "Segoe UI"
NUMBER_FMT = "0.000000"
SCI_FMT = "0.000E+00"
TRACE_ROWS = 600

NAVY, INK, SLATE = "1F4E78", "0F243E", "3A3A3A"


def _solid(color: str) -> PatternFill:
    return PatternFill(fill_type="solid", start_color=color, end_color=color)


HEADER_FILL = _solid(NAVY)
TITLE_FILL = _solid(INK)
SECTION_FILL = _solid("D9E1F2")
ALT_ROW_FILL = _solid("F7F9FC")
PASS_FILL = _solid("C6EFCE")
ALERT_FILL = _solid("FFC7CE")
_GRID_SIDE = Side(style="thin", color="D9D9D9")
THIN_BORDER = Border(left=_GRID_SIDE, right=_GRID_SIDE, top=_GRID_SIDE, bottom=_GRID_SIDE)
TAB_COLORS = {"Summary": NAVY, "Checks": SLATE, "Metrics": NAVY, "Gain": SLATE, "Traces": INK}


def export_experiment_workbook(result: ExperimentResult, output_path: str | Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    wb = Workbook()
    wb.remove(wb.active)
    _write_summary(wb, result)
    _write_checks(wb, result.checks)
    _write_metrics(wb, result)
    _write_gain(wb, result)
    _write_traces(wb, result)
    _apply_workbook_theme(wb)

    wb.save(output_path)
    return output_path


def _write_summary(wb: Workbook, result: ExperimentResult) -> None:
    ws = wb.create_sheet("Summary")
    ws.sheet_view.showGridLines = False
    _title_band(ws, "MTDC leader-follower experiment", "Parameters are placeholders; H2 values depend on them")

    for offset, (label, value) in enumerate(result.summary.items()):
        row = 4 + offset
        ws[f"A{row}"] = label
        ws[f"B{row}"] = value
        ws[f"A{row}"].fill = SECTION_FILL
        ws[f"A{row}"].font = Font(bold=True)
        ws[f"B{row}"].border = THIN_BORDER
        if isinstance(value, float):
            ws[f"B{row}"].number_format = NUMBER_FMT
    _autosize(ws)


def _write_checks(wb: Workbook, checks: pd.DataFrame) -> None:
    ws = wb.create_sheet("Checks")
    ws.sheet_view.showGridLines = False
    for col, header in enumerate(("Check", "Value", "Status"), start=1):
        ws.cell(row=1, column=col, value=header)
    _style_header_row(ws, 1, 3)

    for row, record in enumerate(checks.to_dict(orient="records"), start=2):
        ws.cell(row=row, column=1, value=record["check"])
        ws.cell(row=row, column=2, value=_excel_safe_value(record["value"]))
        ws.cell(row=row, column=3, value=record["status"])
        for col in range(1, 4):
            ws.cell(row=row, column=col).border = THIN_BORDER
            if row % 2 == 0:
                ws.cell(row=row, column=col).fill = ALT_ROW_FILL

    last = len(checks) + 1
    ws.conditional_formatting.add(f"C2:C{last}", FormulaRule(formula=['C2="PASS"'], fill=PASS_FILL))
    ws.conditional_formatting.add(f"C2:C{last}", FormulaRule(formula=['C2<>"PASS"'], fill=ALERT_FILL))
    ws.freeze_panes = "A2"
    _autosize(ws)


def _write_metrics(wb: Workbook, result: ExperimentResult) -> None:
    ws = wb.create_sheet("Metrics")
    ws.sheet_view.showGridLines = False
    runs = list(result.metrics)
    headers = ["Channel"] + [f"Settling ({run})" for run in runs] + [f"Peak ({run})" for run in runs]
    for col, header in enumerate(headers, start=1):
        ws.cell(row=1, column=col, value=header)
    _style_header_row(ws, 1, len(headers))

    for row, label in enumerate(result.system.ss.state_names, start=2):
        ws.cell(row=row, column=1, value=label)
        for k, run in enumerate(runs):
            ws.cell(row=row, column=2 + k, value=_excel_safe_value(result.metrics[run].settling_time[label]))
            peak = ws.cell(row=row, column=2 + len(runs) + k, value=result.metrics[run].peak[label])
            peak.number_format = SCI_FMT

    row = len(result.system.ss.state_names) + 3
    ws.cell(row=row, column=1, value="Quadratic cost").font = Font(bold=True)
    for k, run in enumerate(runs):
        ws.cell(row=row, column=2 + k, value=result.metrics[run].cost).number_format = NUMBER_FMT
    ws.freeze_panes = "B2"
    _autosize(ws)


def _write_gain(wb: Workbook, result: ExperimentResult) -> None:
    ws = wb.create_sheet("Gain")
    ws.sheet_view.showGridLines = False
    gain = result.leader_follower.gain
    ws.cell(row=1, column=1, value="Input / State")
    for col, label in enumerate(gain.state_labels, start=2):
        ws.cell(row=1, column=col, value=label)
    _style_header_row(ws, 1, len(gain.state_labels) + 1)

    for i, label in enumerate(gain.input_labels):
        ws.cell(row=i + 2, column=1, value=label).font = Font(bold=True)
        for j in range(gain.K.shape[1]):
            ws.cell(row=i + 2, column=j + 2, value=float(gain.K[i, j])).number_format = SCI_FMT
    ws.freeze_panes = "B2"
    _autosize(ws)


def _write_traces(wb: Workbook, result: ExperimentResult) -> None:
    ws = wb.create_sheet("Traces")
    ws.sheet_view.showGridLines = False
    channels = ["omega[1]", "omega[6]", "v[P1]", "i[P1-P2]"]
    headers = ["t"] + [f"{run}:{label}" for run in result.traces for label in channels]
    for col, header in enumerate(headers, start=1):
        ws.cell(row=1, column=col, value=header)
    _style_header_row(ws, 1, len(headers))

    first = next(iter(result.traces.values()))
    stride = max(1, len(first.times) // TRACE_ROWS)
    for row, k in enumerate(range(0, len(first.times), stride), start=2):
        ws.cell(row=row, column=1, value=float(first.times[k]))
        col = 2
        for trace in result.traces.values():
            for label in channels:
                ws.cell(row=row, column=col, value=float(trace.channel(label)[k]))
                col += 1
    last_row = ws.max_row

    chart = LineChart()
    chart.title = "AC 1 and AC 6 frequency"
    chart.style = 2
    chart.y_axis.title = "omega (pu)"
    chart.x_axis.title = "t (s)"
    for col in range(2, len(headers) + 1):
        if headers[col - 1].split(":")[1] in ("omega[1]", "omega[6]"):
            chart.add_data(Reference(ws, min_col=col, min_row=1, max_row=last_row), titles_from_data=True)
    chart.set_categories(Reference(ws, min_col=1, min_row=2, max_row=last_row))
    chart.height = 7.5
    chart.width = 16
    ws.add_chart(chart, f"{get_column_letter(len(headers) + 2)}2")


def plot_experiment(result: ExperimentResult, output_path: str | Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    traces = result.traces

    fig, axes = plt.subplots(3, 1, figsize=(6.6, 7.2), sharex=True)
    for label, color in (("omega[1]", "#1F4E78"), ("omega[6]", "#5C7EA8")):
        axes[0].plot(traces["uncontrolled"].times, traces["uncontrolled"].channel(label), color=color, linestyle="--", label=f"{label} (O)")
        axes[0].plot(traces["leader_follower"].times, traces["leader_follower"].channel(label), color=color, label=f"{label} (D)")
    axes[0].set_ylabel("Frequency (pu)")

    for ax, label, title in ((axes[1], "v[P1]", "VSC 7 voltage (pu)"), (axes[2], "i[P1-P2]", "Link current (pu)")):
        ax.plot(traces["leader_follower"].times, traces["leader_follower"].channel(label), color="#1F4E78", label="D")
        ax.plot(traces["centralized"].times, traces["centralized"].channel(label), color="#C0504D", linestyle="--", label="C")
        ax.set_ylabel(title)
    axes[2].set_xlabel("Time (s)")

    for ax in axes:
        ax.grid(axis="y", linestyle="--", alpha=0.3)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(output_path, dpi=200)
    plt.close(fig)
    return output_path


def _excel_safe_value(value):
    if isinstance(value, float) and value in (float("inf"), float("-inf")):
        return "inf" if value > 0 else "-inf"
    if hasattr(value, "item"):
        return value.item()
    return value


def _style_header_row(ws, row_number: int, max_col: int) -> None:
    for cell in ws[row_number][:max_col]:
        cell.font = Font(bold=True, color="FFFFFF")
        cell.fill = HEADER_FILL
        cell.border = THIN_BORDER
        cell.alignment = Alignment(horizontal="center")


def _apply_workbook_theme(wb: Workbook) -> None:
    for ws in wb.worksheets:
        if ws.title in TAB_COLORS:
            ws.sheet_properties.tabColor = TAB_COLORS[ws.title]
        for cell in (c for row in ws.iter_rows() for c in row if c.value is not None):
            font = cell.font
            cell.font = Font(name=BODY_FONT, sz=font.sz, b=font.b, i=font.i, color=font.color)


def _autosize(ws) -> None:
    for column in ws.iter_cols():
        widest = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
        ws.column_dimensions[get_column_letter(column[0].column)].width = min(max(widest + 2, 10), 40)


def _title_band(ws, title: str, subtitle: str, width: str = "C") -> None:
    ws.merge_cells(f"A1:{width}1")
    ws.merge_cells(f"A2:{width}2")
    head, sub = ws["A1"], ws["A2"]
    head.value, sub.value = title, subtitle
    head.font = Font(bold=True, size=14, color="FFFFFF")
    head.fill = TITLE_FILL
    head.alignment = Alignment(vertical="center")
    sub.font = Font(italic=True, color="555555")
    ws.row_dimensions[1].height = 24
