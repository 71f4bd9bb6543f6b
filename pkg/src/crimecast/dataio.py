"""CSV dataset IO and a deterministic binary array container.

CSV schemas (UTF-8, header row, comma-separated, ids 1-based):

    crimes.csv:   region_id,time_slot,crime_type,count
    features.csv: region_id,time_slot,f1,...,fM        (raw observation slots)
    regions.csv:  region_id,centroid_x_km,centroid_y_km

The loader shifts feature rows by the lag: model cell (n, t) holds the raw
features of slot t - lag. Cells absent from the input are zero-filled and
counted in the LoadReport rather than raised.

The array container exists because checkpoints must round-trip bit-exactly
across runs; zip-based formats (npz) embed timestamps and do not.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib import format as npy_format

from .errors import LoadError
from .tensors import CrimeTensor, FeatureTensor, RegionGrid

CRIME_HEADER = ["region_id", "time_slot", "crime_type", "count"]
REGION_HEADER = ["region_id", "centroid_x_km", "centroid_y_km"]


@dataclass
class LoadReport:
    """Fill-in accounting for one dataset load."""

    missing_crime_cells: int = 0
    missing_feature_rows: int = 0
    lag_padded_cells: int = 0
    has_negative_counts: bool = False

    @property
    def warning_count(self) -> int:
        return self.missing_crime_cells + self.missing_feature_rows

    def warnings(self) -> list[str]:
        out = []
        if self.missing_crime_cells:
            out.append(f"{self.missing_crime_cells} crime cell(s) absent from input, filled with 0")
        if self.missing_feature_rows:
            out.append(f"{self.missing_feature_rows} feature row(s) absent from input, filled with 0")
        if self.has_negative_counts:
            out.append("crime file contains negative counts; treating as real-valued data")
        return out


def _parse_int(tok: str, path, line_no: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise LoadError(path, line_no, f"non-integer {what}: {tok!r}") from None


def _parse_float(tok: str, path, line_no: int, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise LoadError(path, line_no, f"non-numeric {what}: {tok!r}") from None
    if not np.isfinite(val):
        raise LoadError(path, line_no, f"non-finite {what}: {tok!r}")
    return val


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(path, 0, f"cannot read file: {exc}") from None


def _load_regions(path) -> RegionGrid:
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0]] != REGION_HEADER:
        raise LoadError(path, 1, f"expected header {','.join(REGION_HEADER)}")
    seen: dict[int, tuple[float, float]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise LoadError(path, line_no, f"expected 3 columns, got {len(row)}")
        rid = _parse_int(row[0], path, line_no, "region_id")
        if rid < 1:
            raise LoadError(path, line_no, f"region_id must be >= 1, got {rid}")
        if rid in seen:
            raise LoadError(path, line_no, f"duplicate region_id {rid}")
        seen[rid] = (
            _parse_float(row[1], path, line_no, "centroid_x_km"),
            _parse_float(row[2], path, line_no, "centroid_y_km"),
        )
    if not seen:
        raise LoadError(path, 2, "no regions defined")
    n = max(seen)
    if set(seen) != set(range(1, n + 1)):
        missing = sorted(set(range(1, n + 1)) - set(seen))
        raise LoadError(path, 0, f"region ids not contiguous from 1: missing {missing}")
    centroids = np.array([seen[r] for r in range(1, n + 1)])
    return RegionGrid(centroids)


def load_dataset(crime_path, feature_path, region_path, lag: int = 1):
    """Load the three CSVs into dense tensors.

    Returns (CrimeTensor, FeatureTensor, RegionGrid, LoadReport). N comes
    from regions.csv; T and K from the maximum ids in crimes.csv; M from the
    features.csv header. Model feature cell (n, t) is raw slot t - lag;
    slots without raw data (t <= lag, or beyond the raw table) are zero.
    """
    grid = _load_regions(region_path)
    N = grid.N

    rows = _read_rows(crime_path)
    if not rows or [c.strip() for c in rows[0]] != CRIME_HEADER:
        raise LoadError(crime_path, 1, f"expected header {','.join(CRIME_HEADER)}")
    cells: dict[tuple[int, int, int], float] = {}
    T = 0
    K = 0
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise LoadError(crime_path, line_no, f"expected 4 columns, got {len(row)}")
        n = _parse_int(row[0], crime_path, line_no, "region_id")
        t = _parse_int(row[1], crime_path, line_no, "time_slot")
        k = _parse_int(row[2], crime_path, line_no, "crime_type")
        v = _parse_float(row[3], crime_path, line_no, "count")
        if not 1 <= n <= N:
            raise LoadError(crime_path, line_no, f"region_id {n} outside 1..{N}")
        if t < 1 or k < 1:
            raise LoadError(crime_path, line_no, "time_slot and crime_type must be >= 1")
        if (n, t, k) in cells:
            raise LoadError(crime_path, line_no, f"duplicate cell ({n},{t},{k})")
        cells[(n, t, k)] = v
        T = max(T, t)
        K = max(K, k)
    if T == 0:
        raise LoadError(crime_path, 2, "no crime observations")
    if lag >= T:
        raise LoadError(feature_path, 0, f"lag {lag} must be smaller than T={T}")

    Y = np.zeros((N, T, K))
    for (n, t, k), v in cells.items():
        Y[n - 1, t - 1, k - 1] = v
    report = LoadReport(missing_crime_cells=N * T * K - len(cells))
    report.has_negative_counts = bool((Y < 0).any())

    frows = _read_rows(feature_path)
    if not frows or len(frows[0]) < 3 or [c.strip() for c in frows[0][:2]] != ["region_id", "time_slot"]:
        raise LoadError(feature_path, 1, "expected header region_id,time_slot,f1,...")
    M = len(frows[0]) - 2
    raw: dict[tuple[int, int], np.ndarray] = {}
    S_raw = 0
    for line_no, row in enumerate(frows[1:], start=2):
        if not row:
            continue
        if len(row) != M + 2:
            raise LoadError(feature_path, line_no, f"expected {M + 2} columns, got {len(row)}")
        n = _parse_int(row[0], feature_path, line_no, "region_id")
        s = _parse_int(row[1], feature_path, line_no, "time_slot")
        if not 1 <= n <= N:
            raise LoadError(feature_path, line_no, f"region_id {n} outside 1..{N}")
        if s < 1:
            raise LoadError(feature_path, line_no, "time_slot must be >= 1")
        if (n, s) in raw:
            raise LoadError(feature_path, line_no, f"duplicate feature row ({n},{s})")
        raw[(n, s)] = np.array(
            [_parse_float(tok, feature_path, line_no, f"f{i + 1}") for i, tok in enumerate(row[2:])]
        )
        S_raw = max(S_raw, s)

    X = np.zeros((N, T, M))
    for t in range(1, T + 1):
        s = t - lag
        if s < 1 or s > S_raw:
            report.lag_padded_cells += N
            continue
        for n in range(1, N + 1):
            vec = raw.get((n, s))
            if vec is None:
                report.missing_feature_rows += 1
            else:
                X[n - 1, t - 1] = vec

    crimes = CrimeTensor(Y, allow_negative=report.has_negative_counts)
    features = FeatureTensor(X, lag=lag)
    return crimes, features, grid, report


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(crimes: CrimeTensor, features: FeatureTensor, grid: RegionGrid, out_dir) -> None:
    """Write the three CSVs. Feature rows are emitted at raw slots
    s = t - lag for model slots t > lag, so load_dataset round-trips the
    tensors bit-exactly (lag-padded cells are zero on both sides)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "crimes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CRIME_HEADER)
        for n in range(crimes.N):
            for t in range(crimes.T):
                for k in range(crimes.K):
                    w.writerow([n + 1, t + 1, k + 1, _fmt(crimes.values[n, t, k])])
    with open(out / "features.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "time_slot"] + [f"f{i + 1}" for i in range(features.M)])
        for n in range(features.N):
            for t in range(features.lag, features.T):
                row = [n + 1, t + 1 - features.lag] + [_fmt(v) for v in features.values[n, t]]
                w.writerow(row)
    write_regions_csv(grid, out / "regions.csv")


def write_regions_csv(grid: RegionGrid, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REGION_HEADER)
        for n in range(grid.N):
            w.writerow([n + 1, _fmt(grid.centroids[n, 0]), _fmt(grid.centroids[n, 1])])


# ---------------------------------------------------------------------------
# Deterministic array container (versioned: JSON header line + .npy payloads)
# ---------------------------------------------------------------------------

_CONTAINER_MAGIC = "crimecast-arrays/1"


def save_arrays(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write metadata plus named arrays to one file, byte-deterministically."""
    header = {"magic": _CONTAINER_MAGIC, "meta": meta, "names": list(arrays)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in arrays:
            npy_format.write_array(fh, np.ascontiguousarray(arrays[name]), version=(1, 0))


def load_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != _CONTAINER_MAGIC:
            raise LoadError(path, 1, "not a crimecast array container")
        arrays = {name: npy_format.read_array(fh) for name in header["names"]}
    return header["meta"], arrays
