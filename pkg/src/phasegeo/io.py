"""Serialization: checkpoints, CSV monitors, PBM masks, run manifests.

Checkpoint layout (little-endian): magic "PFCK", u32 version=1, u32 dim,
u32 n1, u32 n2 (1 when dim=1), f64 t, f64 eps, then n1*n2 f64 cell values
row-major.  Extents are reconstructed under the square-cell convention
L1/L2 = n1/n2 with unit measure.

Every text artifact starts with a single '#' metadata line carrying the
config hash, so outputs are traceable to the exact configuration.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .grid import DomainGrid, ScalarField, make_grid

CHECKPOINT_MAGIC = b"PFCK"
CHECKPOINT_VERSION = 1
TRAJECTORY_COLUMNS = ("t,mass,lambda,energy_total,energy_bulk,energy_grad,"
                      "dist_L1,dist_L2,dist_X2,identity_residual")


class FormatError(ValueError):
    pass


def config_hash(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode()).hexdigest()[:16]


# ------------------------------------------------------------ checkpoints


def write_checkpoint(path, field: ScalarField, t: float, eps: float):
    grid = field.grid
    n1 = grid.resolution[0]
    n2 = grid.resolution[1] if grid.dim == 2 else 1
    header = struct.pack("<4sIIIIdd", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                         grid.dim, n1, n2, float(t), float(eps))
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_checkpoint(path, grid: DomainGrid = None):
    with open(path, "rb") as f:
        header = f.read(struct.calcsize("<4sIIIIdd"))
        magic, version, dim, n1, n2, t, eps = struct.unpack("<4sIIIIdd", header)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        data = np.frombuffer(f.read(8 * n1 * n2), dtype="<f8").copy()
    if grid is None:
        if dim == 1:
            grid = make_grid(1, 1.0, n1)
        else:
            # square cells: L1/L2 = n1/n2 with L1*L2 = 1
            l1 = np.sqrt(n1 / n2)
            grid = make_grid(2, (l1, 1.0 / l1), (n1, n2))
    shape = (n1,) if dim == 1 else (n1, n2)
    return ScalarField(grid, data.reshape(shape)), float(t), float(eps)


# ------------------------------------------------------------------ CSV


def write_trajectory_csv(path, record, cfg_hash: str = ""):
    lines = [f"# phasegeo trajectory v1 config={cfg_hash}",
             TRAJECTORY_COLUMNS]
    n = len(record.times)
    dist = {
        "l1": record.dist_l1 or [np.nan] * n,
        "l2": record.dist_l2 or [np.nan] * n,
        "x2": record.dist_x2 or [np.nan] * n,
    }
    for i in range(n):
        e = record.energies[i]
        lines.append(",".join(repr(float(x)) for x in (
            record.times[i], record.mass[i], record.lam[i], e.total, e.bulk,
            e.gradient, dist["l1"][i], dist["l2"][i], dist["x2"][i],
            record.identity_residual[i])))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_profile_csv(path, profile, cfg_hash: str = ""):
    lines = [f"# phasegeo iso-profile v1 config={cfg_hash}",
             "r,I,minimizer_tag,method"]
    for r, v, tag in zip(profile.r, profile.values, profile.tags):
        lines.append(f"{r!r},{v!r},{tag},{profile.method}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_rearrangement_csv(path, data, cfg_hash: str = ""):
    lines = [f"# phasegeo rearrangement v1 config={cfg_hash}", "s,V,eta,f_u"]
    for s, v, eta, fu in zip(data.s, data.V, data.eta, data.f):
        lines.append(f"{s!r},{v!r},{eta!r},{fu!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_d_vs_eps(path, report, cfg_hash: str = ""):
    lines = [f"# phasegeo D(eps) v1 config={cfg_hash}",
             "# eps D_ref D_drift"]
    for rung in report.rungs:
        lines.append(f"{rung.eps!r} {rung.d_ref!r} {rung.d_drift!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ------------------------------------------------------------------ PBM


def write_pbm_mask(path, indicator):
    member = indicator.membership
    if member.ndim == 1:
        member = member[:, None]
    n1, n2 = member.shape
    lines = ["P1", f"{n1} {n2}"]
    for row in member.astype(int):
        lines.append(" ".join(str(v) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_pbm_mask(path, grid: DomainGrid = None):
    from .geometry import IndicatorSet

    with open(path) as f:
        tokens = []
        for line in f:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise FormatError("not a P1 mask file")
    n1, n2 = int(tokens[1]), int(tokens[2])
    bits = np.array(tokens[3:3 + n1 * n2], dtype=int)
    if bits.size != n1 * n2:
        raise FormatError("mask file truncated")
    member = bits.reshape(n1, n2).astype(bool)
    if grid is None:
        l1 = np.sqrt(n1 / n2)
        grid = make_grid(2, (l1, 1.0 / l1), (n1, n2))
    if member.shape != grid.shape:
        raise FormatError("mask shape does not match grid")
    return IndicatorSet(grid, member)


# ------------------------------------------------------------- manifest


def write_manifest(path, payload: dict):
    """Deterministic JSON: sorted keys, no timestamps, no absolute paths."""
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def manifest_bytes(payload: dict) -> bytes:
    return (json.dumps(payload, sort_keys=True, indent=1) + "\n").encode()
