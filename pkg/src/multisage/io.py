"""On-disk formats: embedding blob, action JSONL, profile store JSONL.

Embedding blob layout (little-endian)::

    b"MSG1" | u32 dimension | u64 count | count x (u64 pin id, f32 x dimension, f32 quality)

Action log: one JSON object per line ``{"user", "pin", "ts", "kind"}``.
Profile store: one JSON object per line
``{"user", "version": {"date", "source"}, "clusters": [{"medoid", "importance", "count"}]}``.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import ActionKind, ActionLog, ActionRecord, PinStore
from .representation import ClusterSummary, ProfileSource, ProfileVersion, UserProfile

BLOB_MAGIC = b"MSG1"
_HEADER = np.dtype([("magic", "S4"), ("dimension", "<u4"), ("count", "<u8")])


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- embeddings ------------------------------------------------------------

def _record_dtype(dimension: int) -> np.dtype:
    return np.dtype([("pin", "<u8"), ("vec", "<f4", (dimension,)), ("quality", "<f4")])


def encode_pin_store(store: PinStore) -> bytes:
    header = np.array([(BLOB_MAGIC, store.dimension, len(store))], dtype=_HEADER)
    body = np.empty(len(store), dtype=_record_dtype(store.dimension))
    body["pin"] = store.ids
    body["vec"] = store.vectors
    body["quality"] = store.quality
    return header.tobytes() + body.tobytes()


def decode_pin_store(data: bytes) -> PinStore:
    if len(data) < _HEADER.itemsize:
        raise FormatError("embedding blob is truncated")
    header = np.frombuffer(data, dtype=_HEADER, count=1)[0]
    if header["magic"] != BLOB_MAGIC:
        raise FormatError(f"bad magic {header['magic']!r}")
    dim, count = int(header["dimension"]), int(header["count"])
    rec = _record_dtype(dim)
    expected = _HEADER.itemsize + count * rec.itemsize
    if len(data) != expected:
        raise FormatError(f"blob holds {len(data)} bytes, header implies {expected}")
    body = np.frombuffer(data, dtype=rec, count=count, offset=_HEADER.itemsize)
    return PinStore(body["pin"].astype(np.int64), body["vec"], body["quality"])


def write_pin_store(path, store: PinStore) -> None:
    atomic_write_bytes(path, encode_pin_store(store))


def read_pin_store(path) -> PinStore:
    return decode_pin_store(Path(path).read_bytes())


# -- actions ---------------------------------------------------------------

def action_line(user: int, record: ActionRecord) -> str:
    return json.dumps({"user": int(user), "pin": int(record.pin), "ts": int(record.timestamp),
                       "kind": record.kind.value})


def write_actions(path, logs: Iterable[ActionLog]) -> None:
    """Write logs as JSONL sorted by (timestamp, user) so the file replays in time order."""
    rows = [(r.timestamp, log.user, i, r) for log in logs for i, r in enumerate(log.records)]
    rows.sort(key=lambda t: t[:3])
    atomic_write_text(path, "".join(action_line(u, r) + "\n" for _, u, _, r in rows))


def parse_action(line: str) -> tuple[int, ActionRecord]:
    try:
        obj = json.loads(line)
        return int(obj["user"]), ActionRecord(int(obj["ts"]), int(obj["pin"]), ActionKind(obj["kind"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad action line: {line.strip()!r}") from exc


def iter_actions(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_action(line)


def read_actions(path) -> dict[int, ActionLog]:
    """Group an action file into per-user logs (stable-sorted by timestamp)."""
    per_user: dict[int, list[ActionRecord]] = defaultdict(list)
    for user, record in iter_actions(path):
        per_user[user].append(record)
    return {u: ActionLog.from_records(u, recs) for u, recs in sorted(per_user.items())}


# -- profiles --------------------------------------------------------------

def profile_to_json(profile: UserProfile) -> str:
    return json.dumps({
        "user": int(profile.user),
        "version": {"date": profile.version.date.isoformat(), "source": profile.version.source.value},
        "clusters": [{"medoid": int(s.medoid), "importance": float(s.importance), "count": int(s.member_count)}
                     for s in profile.summaries],
    })


def profile_from_json(line: str) -> UserProfile:
    try:
        obj = json.loads(line)
        version = ProfileVersion(dt.date.fromisoformat(obj["version"]["date"]),
                                 ProfileSource(obj["version"]["source"]))
        summaries = tuple(ClusterSummary(int(c["medoid"]), float(c["importance"]), int(c["count"]))
                          for c in obj["clusters"])
        return UserProfile(int(obj["user"]), summaries, version)
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad profile line: {line.strip()!r}") from exc


def encode_profiles(profiles: Mapping[int, UserProfile]) -> str:
    return "".join(profile_to_json(profiles[u]) + "\n" for u in sorted(profiles))


def write_profiles(path, profiles: Mapping[int, UserProfile]) -> None:
    atomic_write_text(path, encode_profiles(profiles))


def read_profiles(path) -> dict[int, UserProfile]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                p = profile_from_json(line)
                if p.user in out:
                    raise FormatError(f"user {p.user} appears twice in the profile store")
                out[p.user] = p
    return out


# -- labels ----------------------------------------------------------------

def write_labels(path, labels: Mapping[int, np.ndarray], logs: Mapping[int, ActionLog],
                 interests: Mapping[int, list[int]] | None = None) -> None:
    """Ground truth per user: ``{"user", "topics": [...], "interests": [...]}``.

    ``topics[i]`` labels ``logs[user].records[i]`` (-1 for pins outside every
    topic); ``interests`` lists the topics the user was generated with.
    """
    lines = []
    for u in sorted(logs):
        row = {"user": int(u), "topics": [int(t) for t in labels[u]]}
        if interests is not None:
            row["interests"] = [int(t) for t in interests.get(u, [])]
        lines.append(json.dumps(row))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_labels(path) -> tuple[dict[int, np.ndarray], dict[int, list[int]]]:
    """Per-action topic labels and per-user interest lists (empty when absent)."""
    labels, interests = {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    obj = json.loads(line)
                    user = int(obj["user"])
                    labels[user] = np.array(obj["topics"], dtype=np.int64)
                    interests[user] = [int(t) for t in obj.get("interests", [])]
                except (KeyError, ValueError, TypeError) as exc:
                    raise FormatError(f"bad label line: {line.strip()!r}") from exc
    return labels, interests
