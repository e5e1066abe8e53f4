"""Line-delimited JSON request logs, window reports, event logs and tables.

Request record (one per line, ``schema_version`` 1)::

    {"schema_version": 1,
     "request_id": 17,
     "constraints": {"page_length": 50, "top_ad_slot": 5, "min_ad_gap": 4},
     "rec_list": {"utility_rec": [...], "pctr": [...], "pcvr": [...], "item_price": [...]},
     "ad_list": {"utility_ad": [...], "utility_rec": [...], "pctr": [...], "pcvr": [...],
                 "item_price": [...], "price_per_click": [...], "bid": [...]}}

Lists are columnar and in upstream rank order, so the k-th entry of every
column belongs to the candidate ranked k. Files ending in ``.gz`` are
gzip-compressed with a zeroed timestamp so identical content gives
identical bytes.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence

import numpy as np

from .core import AD_FIELDS, REC_FIELDS, HCA2EError, RequestBatch, RequestConstraints

SCHEMA_VERSION = 1


class DataError(HCA2EError):
    """Input data that cannot be read or does not match the schema."""


def _open_write(path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        raw = open(path, "wb")
        gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0, compresslevel=6)
        return _Closing(io.TextIOWrapper(gz, encoding="utf-8", newline="\n"), raw)
    return open(path, "w", encoding="utf-8", newline="\n")


class _Closing:
    def __init__(self, text, raw):
        self.text, self.raw = text, raw

    def __enter__(self):
        return self.text

    def __exit__(self, *exc):
        self.text.close()
        self.raw.close()


def _open_read(path: Path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def request_records(batch: RequestBatch) -> Iterator[dict]:
    c = batch.constraints
    cons = {"page_length": c.page_length, "top_ad_slot": c.top_ad_slot, "min_ad_gap": c.min_ad_gap}
    rec_lists = {k: batch.rec[k].tolist() for k in REC_FIELDS}
    ad_lists = {k: batch.ad[k].tolist() for k in AD_FIELDS}
    counts = batch.ad_count.tolist()
    for i, rid in enumerate(batch.request_ids):
        k = counts[i]
        yield {
            "schema_version": SCHEMA_VERSION,
            "request_id": rid.item() if hasattr(rid, "item") else rid,
            "constraints": cons,
            "rec_list": {name: rec_lists[name][i] for name in REC_FIELDS},
            "ad_list": {name: ad_lists[name][i][:k] for name in AD_FIELDS},
        }


def write_stream(path, batch: RequestBatch) -> None:
    with _open_write(path) as fh:
        for rec in request_records(batch):
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def records_to_batch(records: Sequence[dict]) -> RequestBatch:
    if not records:
        raise DataError("request log is empty")
    for i, r in enumerate(records):
        if not isinstance(r, dict) or r.get("schema_version") != SCHEMA_VERSION:
            got = r.get("schema_version") if isinstance(r, dict) else None
            raise DataError(f"line {i + 1}: unsupported schema_version {got!r}, expected {SCHEMA_VERSION}")
    first = records[0]
    try:
        cons = RequestConstraints(**first["constraints"])
        n = len(records)
        n_rec = len(first["rec_list"]["utility_rec"])
        width = max(1, max(len(r["ad_list"]["utility_ad"]) for r in records))
        rec = {k: np.zeros((n, n_rec)) for k in REC_FIELDS}
        ad = {k: np.zeros((n, width)) for k in AD_FIELDS}
        count = np.zeros(n, dtype=np.int64)
        ids = np.empty(n, dtype=object)
        for i, r in enumerate(records):
            if r["constraints"] != first["constraints"]:
                raise DataError(f"line {i + 1}: constraints differ from the first record")
            ids[i] = r["request_id"]
            for k in REC_FIELDS:
                col = r["rec_list"][k]
                if len(col) != n_rec:
                    raise DataError(f"line {i + 1}: rec_list.{k} has {len(col)} entries, expected {n_rec}")
                rec[k][i] = col
            k_ads = len(r["ad_list"]["utility_ad"])
            for k in AD_FIELDS:
                col = r["ad_list"].get(k, [0.0] * k_ads if k == "bid" else None)
                if col is None or len(col) != k_ads:
                    raise DataError(f"line {i + 1}: ad_list.{k} missing or ragged")
                ad[k][i, :k_ads] = col
            count[i] = k_ads
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed request record: {exc!r}") from exc
    try:
        return RequestBatch(ids, cons, rec, ad, count)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def read_stream(path) -> RequestBatch:
    records = []
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from exc
    return records_to_batch(records)


def write_jsonl(path, records: Iterable[dict]) -> None:
    with _open_write(path) as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> List[dict]:
    with _open_read(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_table(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def read_table(path) -> List[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such table: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
