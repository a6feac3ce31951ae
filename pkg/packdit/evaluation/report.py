"""MetricsReport YAML files and console tables."""

from pathlib import Path
from typing import Union

import yaml
from pydantic import ValidationError as PydanticValidationError
from rich.table import Table

from ..exceptions import DataError
from ..models.results import MetricsReport
from ..utils.console import console


def report_to_yaml(report: MetricsReport) -> str:
    # field order of the model is the key order of the file
    return yaml.safe_dump(report.model_dump(mode="json"), sort_keys=False)


def write_report(report: MetricsReport, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_to_yaml(report))
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}")


def read_report(path: Union[str, Path]) -> MetricsReport:
    try:
        with open(path) as f:
            return MetricsReport(**yaml.safe_load(f))
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}")
    except (yaml.YAMLError, TypeError, PydanticValidationError) as exc:
        raise DataError(f"malformed report {path}: {exc}")


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (list, tuple)):
        return " / ".join(f"{v:.4f}" for v in value)
    return f"{value:.4f}"


def show_report(report: MetricsReport) -> None:
    table = Table(title=f"Metrics: {report.task} ({report.n_samples} samples, seed {report.seed})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("FID", _fmt(report.fid))
    table.add_row("Diversity", _fmt(report.diversity))
    table.add_row("R@1 / R@2 / R@3", _fmt(report.r_precision))
    table.add_row("BLEU@1..4", _fmt(report.bleu))
    table.add_row("CIDEr", _fmt(report.cider))
    table.add_row("Oracle match", _fmt(report.oracle_match))
    for key, value in report.metadata.items():
        table.add_row(key, value, style="dim")
    console.print(table)
