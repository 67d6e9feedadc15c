"""Trial CSVs, summary JSONs, and the self-consistency audit.

Flag columns follow a self-describing convention: for every ``ok_<name>``
column the CSV also carries ``stat_<name>`` and ``bound_<name>``, and the flag
must equal the indicator of stat <= bound.  Summary ``frequencies`` entries
are the plain means of the flag columns.  ``audit`` re-derives both from the
written files, so a report can always be checked without rerunning trials.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

SCHEMA_LINE = "# schema=1"


def _format_value(v) -> str:
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(rows: list[dict]) -> str:
    if not rows:
        raise ValueError("no trial rows to write")
    columns = list(rows[0].keys())
    for i, row in enumerate(rows):
        if list(row.keys()) != columns:
            raise ValueError(f"trial {i} produced columns {list(row)} != {columns}")
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_value(v) for v in row.values()])
    return buf.getvalue()


def write_csv(rows: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows))
    return path


def read_csv(path: Path) -> list[dict]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != SCHEMA_LINE:
        raise ValueError(f"{path} is missing the '{SCHEMA_LINE}' header")
    reader = csv.reader(text[1:])
    header = next(reader)
    out = []
    for raw in reader:
        row = {}
        for key, val in zip(header, raw):
            row[key] = _parse_value(val)
        out.append(row)
    return out


def _parse_value(val: str):
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        return val


def write_summary(summary: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return path


@dataclass(frozen=True)
class Criterion:
    name: str
    value: float
    target: float
    cmp: str  # ">=" or "<="

    @property
    def passed(self) -> bool:
        return bool(self.value >= self.target if self.cmp == ">=" else self.value <= self.target)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "target": self.target,
            "cmp": self.cmp,
            "pass": self.passed,
        }


def flag_names(rows: list[dict]) -> list[str]:
    return [c[3:] for c in rows[0].keys() if c.startswith("ok_")]


def frequencies(rows: list[dict]) -> dict:
    names = flag_names(rows)
    return {
        name: sum(int(r[f"ok_{name}"]) for r in rows) / len(rows)
        for name in names
    }


@dataclass(frozen=True)
class AuditFinding:
    kind: str
    detail: str


def audit(csv_path: str | Path, summary_path: str | Path) -> list[AuditFinding]:
    """Re-derive every flag and summary frequency; return the discrepancies."""
    rows = read_csv(Path(csv_path))
    summary = json.loads(Path(summary_path).read_text())
    findings: list[AuditFinding] = []
    for i, row in enumerate(rows):
        for name in flag_names(rows):
            stat, bound = row.get(f"stat_{name}"), row.get(f"bound_{name}")
            if stat is None or bound is None:
                findings.append(
                    AuditFinding("missing-columns", f"flag {name} lacks stat/bound columns")
                )
                continue
            expected = int(float(stat) <= float(bound))
            if int(row[f"ok_{name}"]) != expected:
                findings.append(
                    AuditFinding(
                        "flag-mismatch",
                        f"row {i}: ok_{name}={row[f'ok_{name}']} but stat={stat} bound={bound}",
                    )
                )
    stored = summary.get("frequencies", {})
    for name, freq in frequencies(rows).items():
        if name not in stored:
            findings.append(AuditFinding("missing-frequency", f"summary lacks frequency {name}"))
        elif abs(stored[name] - freq) > 1e-12:
            findings.append(
                AuditFinding(
                    "frequency-mismatch", f"{name}: summary {stored[name]} vs recomputed {freq}"
                )
            )
    for crit in summary.get("criteria", []):
        value, target = float(crit["value"]), float(crit["target"])
        expected = value >= target if crit["cmp"] == ">=" else value <= target
        if bool(crit["pass"]) != expected:
            findings.append(
                AuditFinding("criterion-mismatch", f"{crit['name']}: stored pass={crit['pass']}")
            )
    return findings
