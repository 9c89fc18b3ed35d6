"""CSV and JSON report writers with byte-reproducible output.

Floats are serialized with ``repr`` (shortest round-trip form) and files
are written atomically, so reruns of the same experiment produce identical
bytes. Wall-clock columns are zeroed when ``deterministic_timings`` is set;
real timings then live in the run summary JSON only.
"""

from __future__ import annotations

import hashlib
import json

from .serialization import atomic_write_text


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def error_report_csv(path, report, deterministic_timings=False) -> None:
    """ErrorReport rows under the header ``m,error,p,seconds``."""
    rows = [
        (r.m, r.error, r.p, 0.0 if deterministic_timings else r.seconds)
        for r in report.records
    ]
    write_csv(path, ("m", "error", "p", "seconds"), rows)


def trace_csv(path, trace, deterministic_timings=False) -> None:
    """SolveTrace rows under the header ``k,ranks,resid,J,seconds``."""
    rows = [
        (
            r.k,
            "x".join(str(v) for v in r.ranks),
            r.resid,
            r.functional,
            0.0 if deterministic_timings else r.seconds,
        )
        for r in trace.records
    ]
    write_csv(path, ("k", "ranks", "resid", "J", "seconds"), rows)


def read_csv(path):
    """Header tuple plus rows of strings."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines:
        return (), []
    header = tuple(lines[0].split(","))
    rows = [tuple(line.split(",")) for line in lines[1:]]
    return header, rows


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_summary(path, config, artifacts, timings) -> None:
    from . import __version__

    summary = {
        "config_hash": config_hash(config),
        "config": config,
        "version": __version__,
        "artifacts": sorted(artifacts),
        "timings": timings,
    }
    atomic_write_text(path, json.dumps(summary, indent=2) + "\n")
