"""CSV/JSON readers and writers for the file formats the CLI exchanges.

Floats are written with ``repr`` (shortest round-trip form) and JSON with
sorted keys, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .geo import Locations

FORMAT_VERSION = "dimexp/1"


def _f(x) -> str:
    return repr(float(x))


def write_locations(path, locs: Locations):
    d = locs.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id"] + [f"x{k + 1}" for k in range(d)])
        for sid, row in zip(locs.site_ids, locs.coords):
            w.writerow([sid] + [_f(v) for v in row])


def read_locations(path) -> Locations:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty locations file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "site_id" or len(header) < 2:
        raise ValueError(f"{path}: expected header 'site_id,x1,...,xd', got {header}")
    ids, coords = [], []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        try:
            coords.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: {exc}") from None
    return Locations(np.array(coords, dtype=float), tuple(ids))


def write_observations(path, site_ids, values):
    """Long format ``site_id,replicate,value``; NaN cells are skipped."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "replicate", "value"])
        for sid, row in zip(site_ids, values):
            for t, v in enumerate(row):
                if not np.isnan(v):
                    w.writerow([sid, t, _f(v)])


def read_observations(path, site_ids) -> np.ndarray:
    """Observations as a ``(sites, replicates)`` array ordered like ``site_ids``; NaN where absent."""
    index = {sid: i for i, sid in enumerate(site_ids)}
    recs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["site_id", "replicate", "value"]:
            raise ValueError(f"{path}: expected header 'site_id,replicate,value'")
        for n, row in enumerate(reader, start=2):
            sid = row["site_id"]
            if sid not in index:
                raise ValueError(f"{path}:{n}: unknown site {sid!r}")
            try:
                recs.append((index[sid], int(row["replicate"]), float(row["value"])))
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
    if not recs:
        raise ValueError(f"{path}: no observations")
    reps = sorted({r for _, r, _ in recs})
    col = {r: j for j, r in enumerate(reps)}
    Y = np.full((len(site_ids), len(reps)), np.nan)
    for i, r, v in recs:
        Y[i, col[r]] = v
    return Y


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_binned(path, binned, fitted=None):
    """Binned variogram CSV ``distance,dispersion,count[,fitted]``."""
    header = ["distance", "dispersion", "count"] + (["fitted"] if fitted is not None else [])
    rows = []
    for k, (c, m, n) in enumerate(zip(binned.bin_centers, binned.bin_means, binned.bin_counts)):
        row = [float(c), float(m), int(n)]
        if fitted is not None:
            row.append(float(fitted[k]))
        rows.append(row)
    write_rows(path, header, rows)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
