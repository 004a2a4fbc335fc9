"""Plain-text artifacts: CSV tables, sinograms and grid functions.

Every file starts with one comment line carrying the producing command,
the config hash and the seed. Floats are written with ``repr``, the
shortest decimal that round-trips a 64-bit float.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .xray import GridFunction, Sinogram


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value) + 0.0)


def header_line(command: str, config_hash: str, seed: int, **extra) -> str:
    parts = [f"emscatter {command}", f"config_sha256={config_hash}", f"seed={seed}"]
    parts += [f"{k}={fmt(v)}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def parse_header(line: str) -> dict:
    """Key-value pairs of a header line (the command under ``command``)."""
    if not line.startswith("# emscatter "):
        raise ValueError(f"not an artifact header: {line[:60]!r}")
    tokens = line[len("# emscatter "):].split()
    out = {"command": tokens[0]}
    for tok in tokens[1:]:
        k, _, v = tok.partition("=")
        out[k] = v
    return out


def write_table(path, header: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    lines = [header, ",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path):
    """(header dict, column names, float array of shape (rows, columns))."""
    text = Path(path).read_text().splitlines()
    meta = parse_header(text[0])
    columns = text[1].split(",")
    rows = [[float(v) for v in ln.split(",")] for ln in text[2:] if ln]
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return meta, columns, data


def vector_columns(name: str, n: int) -> list[str]:
    return [f"{name}_{i + 1}" for i in range(n)]


def write_sinogram(path, sino: Sinogram, header: str) -> Path:
    rows = [(j, i, *sino.values[j, i]) for j in range(sino.J) for i in range(sino.I)]
    path = Path(path)
    lines = [header, f"J={sino.J},I={sino.I},Q={fmt(sino.Q)},m={sino.m}",
             ",".join(["j", "i"] + vector_columns("value", sino.m))]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _shape_line(line: str) -> dict:
    return {k: v for k, _, v in (item.partition("=") for item in line.split(","))}


def read_sinogram(path) -> tuple[dict, Sinogram]:
    text = Path(path).read_text().splitlines()
    meta = parse_header(text[0])
    shape = _shape_line(text[1])
    J, I, m = int(shape["J"]), int(shape["I"]), int(shape["m"])
    vals = np.zeros((J, I, m))
    for ln in text[3:]:
        if not ln:
            continue
        parts = ln.split(",")
        vals[int(parts[0]), int(parts[1])] = [float(v) for v in parts[2:]]
    return meta, Sinogram(J, I, float(shape["Q"]), vals)


def write_grid(path, grid: GridFunction, header: str) -> Path:
    """Row-major values, one grid cell per line."""
    path = Path(path)
    flat = grid.values.reshape(-1, grid.m)
    lines = [header, f"L={fmt(grid.L)},resolution={grid.resolution},m={grid.m}"]
    lines += [",".join(fmt(v) for v in row) for row in flat]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_grid(path) -> tuple[dict, GridFunction]:
    text = Path(path).read_text().splitlines()
    meta = parse_header(text[0])
    shape = _shape_line(text[1])
    N, m = int(shape["resolution"]), int(shape["m"])
    vals = np.array([[float(v) for v in ln.split(",")] for ln in text[2:] if ln])
    return meta, GridFunction(float(shape["L"]), N, vals.reshape(N, N, m))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def write_json(path, payload: dict, config_hash: str, seed: int) -> Path:
    path = Path(path)
    body = {"config_sha256": config_hash, "seed": seed, **_plain(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path
