"""File formats: sample sets, density matrices, log-likelihood traces, grids.

SampleSet binary layout (little-endian)::

    8 bytes  magic b"QHDSAMP1"
    u64      count
    u64      seed
    u32      generation
    u32      reserved (0)
    count x (f64 x, f64 y)

The CSV alternative has the header ``x,y`` and one sample per line.
"""

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .sampler import SampleSet

MAGIC = b"QHDSAMP1"
_HEADER = struct.Struct("<8sQQII")


class FormatError(ValueError):
    pass


def write_samples(path, samples, fmt=None):
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write("x,y\n")
            for p in samples.points:
                fh.write(f"{float(p.real)!r},{float(p.imag)!r}\n")
        return path
    xy = np.empty((samples.count, 2), dtype="<f8")
    xy[:, 0] = samples.x
    xy[:, 1] = samples.y
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, samples.count, samples.seed, samples.generation, 0))
        fh.write(xy.tobytes())
    return path


def read_samples(path):
    """Read a SampleSet from either the binary or the CSV format."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:8] == MAGIC:
            if len(head) < _HEADER.size:
                raise FormatError(f"{path}: truncated header")
            _, count, seed, generation, _ = _HEADER.unpack(head)
            body = fh.read()
            if len(body) != 16 * count:
                raise FormatError(f"{path}: expected {count} samples, found {len(body) / 16:g}")
            xy = np.frombuffer(body, dtype="<f8").reshape(-1, 2)
            return SampleSet.from_xy(
                xy[:, 0], xy[:, 1], seed=seed, generation=generation, source=str(path)
            )
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise FormatError(f"{path}: not a sample file (bad magic, no 'x,y' header)")
        rows = [(float(a), float(b)) for a, b in reader]
    xy = np.array(rows, dtype=float).reshape(-1, 2)
    return SampleSet.from_xy(xy[:, 0], xy[:, 1], source=str(path))


def _fmt_complex(z):
    return f"{z.real:.17g}{z.imag:+.17g}i"


def write_density(path, rho):
    rho = np.asarray(rho, dtype=complex)
    lines = [f"DIM {rho.shape[0]}"]
    lines += [",".join(_fmt_complex(z) for z in row) for row in rho]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_density(path):
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if len(head) != 2 or head[0] != "DIM":
        raise FormatError(f"{path}: missing 'DIM <n>' header")
    dim = int(head[1])
    rows = [ln for ln in text[1:] if ln.strip()]
    if len(rows) != dim:
        raise FormatError(f"{path}: expected {dim} rows, found {len(rows)}")
    rho = np.empty((dim, dim), dtype=complex)
    for i, ln in enumerate(rows):
        cells = ln.split(",")
        if len(cells) != dim:
            raise FormatError(f"{path}: row {i} has {len(cells)} entries")
        for j, c in enumerate(cells):
            c = c.strip()
            if not c.endswith("i"):
                raise FormatError(f"{path}: bad complex literal {c!r}")
            rho[i, j] = complex(c[:-1] + "j")
    return rho


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        fh.write("iteration,loglik\n")
        for k, v in enumerate(trace):
            fh.write(f"{k},{float(v)!r}\n")
    return Path(path)


def read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [float(r["loglik"]) for r in reader]


def write_grid(path, grid, source=""):
    """Write a PhaseSpaceGrid as ``x,y,value`` CSV plus a ``.json`` sidecar."""
    path = Path(path)
    xs, ys = grid.xs, grid.ys
    with open(path, "w", newline="") as fh:
        fh.write("x,y,value\n")
        for j in range(grid.ny):
            for i in range(grid.nx):
                fh.write(f"{float(xs[i])!r},{float(ys[j])!r},{float(grid.values[j, i])!r}\n")
    meta = {
        "x_min": grid.x_min,
        "x_max": grid.x_max,
        "y_min": grid.y_min,
        "y_max": grid.y_max,
        "nx": grid.nx,
        "ny": grid.ny,
        "overflow_fraction": grid.overflow,
        "centered": grid.centered,
        "source": source or grid.source,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return path


def read_grid(path):
    from .quasiprob import PhaseSpaceGrid

    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = data[:, 2].reshape(meta["ny"], meta["nx"])
    return PhaseSpaceGrid(
        meta["x_min"],
        meta["x_max"],
        meta["y_min"],
        meta["y_max"],
        values,
        overflow=meta.get("overflow_fraction", 0.0),
        source=meta.get("source", ""),
        centered=meta.get("centered", False),
    )
