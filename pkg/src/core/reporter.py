"""
SOUP Reporter Module
Run manifests plus CSV, JSON and console reports of experiment traces
"""
import csv
import io
import json
import platform
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from . import __version__


class RunManifest(BaseModel):
    """Everything needed to rerun an experiment and read its outputs"""

    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    rows: List[Dict[str, Any]] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    version: str = __version__
    python: str = Field(default_factory=platform.python_version)
    created: str = Field(default_factory=lambda: datetime.now().isoformat())


class RunReporter:
    """Generate experiment reports"""

    @staticmethod
    def generate_json_report(manifest: RunManifest, output_file: str = None) -> str:
        """Generate JSON manifest"""
        report_json = json.dumps(manifest.model_dump(), indent=2, default=str)

        if output_file:
            with open(output_file, 'w') as f:
                f.write(report_json)

        return report_json

    @staticmethod
    def generate_csv_report(rows: Sequence[Dict[str, Any]], output_file: str = None,
                            columns: Sequence[str] = None) -> str:
        """Generate plot-ready CSV, one column per trace"""
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(row.get(k)) for k in columns})
        report_csv = buffer.getvalue()

        if output_file:
            with open(output_file, 'w', newline='') as f:
                f.write(report_csv)

        return report_csv

    @staticmethod
    def generate_cli_report(manifest: RunManifest) -> str:
        """Generate console-friendly report"""
        output = []
        output.append("\n" + "=" * 60)
        output.append(f"📈 SOUP {manifest.command.upper()} REPORT")
        output.append("=" * 60)

        if manifest.seed is not None:
            output.append(f"\n🎲 Seed: {manifest.seed}")

        if manifest.summary:
            output.append("\n📊 SUMMARY:")
            for key, value in manifest.summary.items():
                output.append(f"  {key}: {_format_cell(value)}")

        if manifest.timings:
            output.append("\n⏱️  TIMINGS:")
            for phase, seconds in manifest.timings.items():
                output.append(f"  {phase}: {seconds:.3f} s")

        if manifest.artifacts:
            output.append("\n📄 ARTIFACTS:")
            for name, path in manifest.artifacts.items():
                output.append(f"  {name}: {path}")

        output.append("\n" + "=" * 60 + "\n")

        return "\n".join(output)


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
