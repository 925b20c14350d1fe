"""Verification reports and byte-stable artifact files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

CERT_KINDS = ("exact", "grid+lipschitz", "sampled", "a-priori")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, canonical_json(obj))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


@dataclass
class Claim:
    name: str
    target: float
    achieved: float
    certificate: str
    holds: bool
    samples: int | None = None
    note: str = ""

    def __post_init__(self):
        if self.certificate not in CERT_KINDS:
            raise ValueError(f"unknown certificate kind {self.certificate!r}")
        if self.certificate == "sampled" and not self.samples:
            raise ValueError("sampled claims must state their sample count")

    def to_json(self):
        out = {"name": self.name, "target": self.target, "achieved": self.achieved, "certificate": self.certificate, "holds": bool(self.holds)}
        if self.samples is not None:
            out["samples"] = int(self.samples)
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class VerifyReport:
    """Named claims with target bound, achieved value and certificate kind."""

    command: str
    measure_hash: str = ""
    seed: int | None = None
    claims: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def claim(self, name, target, achieved, certificate, holds=None, samples=None, note="", le=True):
        """Record a claim; ``holds`` defaults to ``achieved <= target`` (or ``>=`` when ``le`` is false)."""
        if holds is None:
            holds = achieved <= target if le else achieved >= target
        c = Claim(name, float(target), float(achieved), certificate, bool(holds), samples, note)
        self.claims.append(c)
        return c

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.claims)

    @property
    def run_id(self) -> str:
        blob = json.dumps(_plain({"command": self.command, "measure": self.measure_hash, "seed": self.seed, "extra": self.extra}), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self):
        return {
            "run_id": self.run_id,
            "command": self.command,
            "measure_hash": self.measure_hash,
            "seed": self.seed,
            "ok": self.ok,
            "claims": [c.to_json() for c in self.claims],
            "extra": _plain(self.extra),
        }

    def csv_rows(self):
        return [(c.name, c.target, c.achieved, c.certificate, int(c.holds), c.samples or "") for c in self.claims]

    def write(self, stem) -> None:
        write_json(f"{stem}.json", self.to_json())
        write_csv(f"{stem}.csv", ["claim", "target", "achieved", "certificate", "holds", "samples"], self.csv_rows())

    def summary(self) -> str:
        lines = []
        for c in self.claims:
            mark = "PASS" if c.holds else "FAIL"
            lines.append(f"[{mark}] {c.name}: achieved {c.achieved:.6g} vs target {c.target:.6g} ({c.certificate})")
        return "\n".join(lines)
