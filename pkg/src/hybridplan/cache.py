"""Persistent known-plans / known-flaws stores.

Each store is an append-only JSON-lines file with a header line. On open the
file is compacted to the last record per signature; unreadable lines are
skipped with a warning. A ``LOCK`` file held with ``flock`` keeps a second
process (or a second store object) off the same directory.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .fixes import DomainFix, parse_fix, print_fix
from .signature import DIGEST_ALGORITHM, ProblemSignature

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PLANS_FILE = "known_plans.jsonl"
FLAWS_FILE = "known_flaws.jsonl"
LOCK_FILE = "LOCK"
PROVENANCES = ("solver", "solver+review", "repaired-domain")


class CacheError(OSError):
    """Storage failure; distinct from a lookup that finds nothing."""


class CacheLockedError(CacheError):
    pass


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class PlanRecord:
    signature: str
    plan: list[str]
    created_at: str = field(default_factory=now_iso)
    provenance: str = "solver"

    def to_json(self) -> dict:
        return {"signature": self.signature, "plan": list(self.plan),
                "created_at": self.created_at, "provenance": self.provenance}

    @classmethod
    def from_json(cls, doc: dict) -> "PlanRecord":
        if doc.get("provenance") not in PROVENANCES:
            raise ValueError(f"unknown provenance {doc.get('provenance')!r}")
        if not isinstance(doc.get("plan"), list):
            raise ValueError("plan must be a list")
        return cls(str(doc["signature"]), [str(s) for s in doc["plan"]],
                   str(doc["created_at"]), doc["provenance"])


@dataclass
class FlawRecord:
    signature: str
    fix: DomainFix
    created_at: str = field(default_factory=now_iso)
    backend: str = ""

    def to_json(self) -> dict:
        return {"signature": self.signature, "fix": print_fix(self.fix),
                "created_at": self.created_at, "backend": self.backend}

    @classmethod
    def from_json(cls, doc: dict) -> "FlawRecord":
        return cls(str(doc["signature"]), parse_fix(doc["fix"]),
                   str(doc["created_at"]), str(doc.get("backend", "")))


@dataclass
class CacheStats:
    plan_hits: int = 0
    plan_misses: int = 0
    flaw_hits: int = 0
    flaw_misses: int = 0
    writes: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


class _Table:
    """One JSON-lines file (or a plain dict when ``path`` is None)."""

    def __init__(self, path: Path | None, kind: str, decode):
        self.path = path
        self.kind = kind
        self.decode = decode
        self.records: dict[str, Any] = {}
        if path is not None:
            self._load()

    def _header(self) -> dict:
        return {"format": "hybridplan-cache", "kind": self.kind,
                "version": FORMAT_VERSION, "digest": DIGEST_ALGORITHM}

    def _load(self) -> None:
        assert self.path is not None
        if self.path.exists():
            try:
                lines = self.path.read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                raise CacheError(f"cannot read {self.path}: {exc}") from exc
            if lines:
                try:
                    header = json.loads(lines[0])
                except json.JSONDecodeError:
                    raise CacheError(f"{self.path}: missing header line") from None
                if header.get("format") != "hybridplan-cache" or header.get("kind") != self.kind:
                    raise CacheError(f"{self.path}: not a {self.kind} store")
                if header.get("version") != FORMAT_VERSION:
                    raise CacheError(f"{self.path}: unsupported version {header.get('version')}")
                if header.get("digest") != DIGEST_ALGORITHM:
                    raise CacheError(f"{self.path}: digest {header.get('digest')} != {DIGEST_ALGORITHM}")
            for lineno, line in enumerate(lines[1:], 2):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    if not isinstance(doc, dict):
                        raise ValueError("record is not a JSON object")
                    rec = self.decode(doc)
                except (ValueError, KeyError, TypeError) as exc:
                    log.warning("%s:%d: skipping unreadable record (%s)", self.path, lineno, exc)
                    continue
                self.records[rec.signature] = rec
        self._rewrite()

    def _rewrite(self) -> None:
        assert self.path is not None
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(self._header(), sort_keys=True) + "\n")
                for rec in self.records.values():
                    fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except OSError as exc:
            raise CacheError(f"cannot write {self.path}: {exc}") from exc

    def put(self, rec) -> None:
        self.records[rec.signature] = rec
        if self.path is None:
            return
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise CacheError(f"cannot append to {self.path}: {exc}") from exc

    def clear(self) -> None:
        self.records.clear()
        if self.path is not None:
            self._rewrite()


class PlanStore:
    """Both databases behind one lock. ``directory=None`` keeps them in memory."""

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._lock = threading.RLock()
        self._lock_fh = None
        self._stats = CacheStats()
        if self.directory is not None:
            try:
                self.directory.mkdir(parents=True, exist_ok=True)
                self._lock_fh = open(self.directory / LOCK_FILE, "a+")
            except OSError as exc:
                raise CacheError(f"cannot open cache directory {self.directory}: {exc}") from exc
            try:
                fcntl.flock(self._lock_fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                self._lock_fh.close()
                self._lock_fh = None
                raise CacheLockedError(f"cache {self.directory} is in use by another process") from None
            try:
                self._plans = _Table(self.directory / PLANS_FILE, "known_plans", PlanRecord.from_json)
                self._flaws = _Table(self.directory / FLAWS_FILE, "known_flaws", FlawRecord.from_json)
            except Exception:
                self.close()
                raise
        else:
            self._plans = _Table(None, "known_plans", PlanRecord.from_json)
            self._flaws = _Table(None, "known_flaws", FlawRecord.from_json)

    def __enter__(self) -> "PlanStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        with self._lock:
            if self._lock_fh is not None:
                fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
                self._lock_fh.close()
                self._lock_fh = None

    def get_plan(self, sig: ProblemSignature | str) -> PlanRecord | None:
        with self._lock:
            rec = self._plans.records.get(str(sig))
            if rec is None:
                self._stats.plan_misses += 1
            else:
                self._stats.plan_hits += 1
            return rec

    def put_plan(self, sig: ProblemSignature | str, record: PlanRecord) -> None:
        if record.signature != str(sig):
            record = PlanRecord(str(sig), record.plan, record.created_at, record.provenance)
        with self._lock:
            self._plans.put(record)
            self._stats.writes += 1

    def get_flaw(self, sig: ProblemSignature | str) -> FlawRecord | None:
        with self._lock:
            rec = self._flaws.records.get(str(sig))
            if rec is None:
                self._stats.flaw_misses += 1
            else:
                self._stats.flaw_hits += 1
            return rec

    def put_flaw(self, sig: ProblemSignature | str, record: FlawRecord) -> None:
        if record.fix.is_empty():
            raise ValueError("refusing to cache an empty fix")
        if record.signature != str(sig):
            record = FlawRecord(str(sig), record.fix, record.created_at, record.backend)
        with self._lock:
            self._flaws.put(record)
            self._stats.writes += 1

    def peek_flaw(self, sig: ProblemSignature | str) -> FlawRecord | None:
        """Lookup that does not count towards the hit/miss statistics."""
        with self._lock:
            return self._flaws.records.get(str(sig))

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(**self._stats.as_dict())

    def plans(self) -> list[PlanRecord]:
        with self._lock:
            return list(self._plans.records.values())

    def flaws(self) -> list[FlawRecord]:
        with self._lock:
            return list(self._flaws.records.values())

    def clear(self) -> None:
        with self._lock:
            self._plans.clear()
            self._flaws.clear()
