"""Structured results and on-disk emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class DiagnosticReport:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> list of row dicts
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(schema=SCHEMA_VERSION, name=self.name, passed=bool(self.passed),
                    metrics=_plain(self.metrics), notes=list(self.notes),
                    tables={k: _plain(v) for k, v in self.tables.items()})


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in _plain(r).items()})
    return buf.getvalue()


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_report(report: DiagnosticReport, directory, fmt: str = "csv") -> list:
    os.makedirs(directory, exist_ok=True)
    paths = []
    p = os.path.join(directory, f"{report.name}_report.json")
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(p)
    for tname, rows in report.tables.items():
        if fmt == "csv":
            p = os.path.join(directory, f"{report.name}_{tname}.csv")
            with open(p, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text(rows))
        else:
            p = os.path.join(directory, f"{report.name}_{tname}.json")
            with open(p, "w", encoding="utf-8") as fh:
                json.dump(dict(schema=SCHEMA_VERSION, rows=_plain(rows)), fh, indent=1)
                fh.write("\n")
        paths.append(p)
    return paths


def write_manifest(directory, config_text: str, seeds, wall_time: float, paths, passed: bool,
                   error: str | None = None) -> str:
    p = os.path.join(directory, "manifest.json")
    man = dict(schema=SCHEMA_VERSION, config=config_text, seeds=list(map(int, seeds)),
               wall_time_s=round(float(wall_time), 3), passed=bool(passed), error=error,
               artifacts={os.path.basename(a): sha256(a) for a in paths})
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return p
