"""File formats: trajectory CSV and fitted-parameter JSON documents.

Trajectory CSV: header ``t,x0,...,v0,...,a0,...`` in SI units at uniform dt;
optional orientation columns ``qw,qx,qy,qz`` (scalar-first, Shuster
composition convention, noted in a leading comment line).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .dmp import BasisSet, DmpParams, Trajectory
from .orientation import OrientationDmpParams
from .quaternions import UnitQuaternion

QUAT_HEADER_COMMENT = (
    "# orientation columns qw,qx,qy,qz: scalar-first, Shuster composition convention"
)


def write_trajectory_csv(
    path: Union[str, Path],
    traj: Trajectory,
    quats: Optional[List[UnitQuaternion]] = None,
) -> None:
    path = Path(path)
    d = traj.n_dims
    header = (
        ["t"]
        + [f"x{i}" for i in range(d)]
        + [f"v{i}" for i in range(d)]
        + [f"a{i}" for i in range(d)]
    )
    cols = [traj.t[:, None], traj.pos, traj.vel, traj.acc]
    lines = []
    if quats is not None:
        if len(quats) != traj.t.size:
            raise ValueError("quaternion count must match trajectory samples")
        header += ["qw", "qx", "qy", "qz"]
        cols.append(np.stack([q.as_array() for q in quats]))
        lines.append(QUAT_HEADER_COMMENT)
    data = np.concatenate(cols, axis=1)
    lines.append(",".join(header))
    for row in data:
        lines.append(",".join(format(v, ".12g") for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_csv(
    path: Union[str, Path],
) -> Tuple[Trajectory, Optional[List[UnitQuaternion]]]:
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise ValueError(f"no data rows in {path}")
    data = np.asarray(rows)
    has_quat = "qw" in header
    d = (len(header) - 1 - (4 if has_quat else 0)) // 3
    t = data[:, 0]
    pos = data[:, 1 : 1 + d]
    vel = data[:, 1 + d : 1 + 2 * d]
    acc = data[:, 1 + 2 * d : 1 + 3 * d]
    traj = Trajectory(t, pos, vel, acc)
    quats = None
    if has_quat:
        qcols = data[:, 1 + 3 * d : 5 + 3 * d]
        quats = [UnitQuaternion.from_wxyz(q) for q in qcols]
    return traj, quats


def dmp_params_to_dict(params: DmpParams) -> dict:
    return {
        "kind": "translational",
        "alpha_v": params.alpha_v,
        "beta_v": params.beta_v,
        "alpha_s": params.alpha_s,
        "tau": params.tau,
        "y0": params.y0.tolist(),
        "g": params.g.tolist(),
        "basis_centers": params.basis.centers.tolist(),
        "basis_widths": params.basis.widths.tolist(),
        "weights": params.weights.tolist(),
    }


def dmp_params_from_dict(doc: dict) -> DmpParams:
    return DmpParams(
        alpha_v=doc["alpha_v"],
        beta_v=doc["beta_v"],
        tau=doc["tau"],
        y0=np.asarray(doc["y0"]),
        g=np.asarray(doc["g"]),
        weights=np.asarray(doc["weights"]),
        basis=BasisSet(np.asarray(doc["basis_centers"]), np.asarray(doc["basis_widths"])),
        alpha_s=doc["alpha_s"],
    )


def orientation_params_to_dict(params: OrientationDmpParams) -> dict:
    return {
        "kind": "orientation",
        "alpha_v": params.alpha_v,
        "beta_v": params.beta_v,
        "alpha_s": params.alpha_s,
        "tau": params.tau,
        "g_q": params.g_q.as_array().tolist(),
        "basis_centers": params.basis.centers.tolist(),
        "basis_widths": params.basis.widths.tolist(),
        "weights": params.weights.tolist(),
    }


def orientation_params_from_dict(doc: dict) -> OrientationDmpParams:
    return OrientationDmpParams(
        alpha_v=doc["alpha_v"],
        beta_v=doc["beta_v"],
        tau=doc["tau"],
        g_q=UnitQuaternion.from_wxyz(np.asarray(doc["g_q"])),
        weights=np.asarray(doc["weights"]),
        basis=BasisSet(np.asarray(doc["basis_centers"]), np.asarray(doc["basis_widths"])),
        alpha_s=doc["alpha_s"],
    )


def save_dmp_params(
    path: Union[str, Path],
    translational: DmpParams,
    orientation: Optional[OrientationDmpParams] = None,
) -> None:
    doc = {"translational": dmp_params_to_dict(translational)}
    if orientation is not None:
        doc["orientation"] = orientation_params_to_dict(orientation)
    Path(path).write_text(json.dumps(doc, indent=2))


def load_dmp_params(
    path: Union[str, Path],
) -> Tuple[DmpParams, Optional[OrientationDmpParams]]:
    doc = json.loads(Path(path).read_text())
    trans = dmp_params_from_dict(doc["translational"])
    orient = (
        orientation_params_from_dict(doc["orientation"]) if "orientation" in doc else None
    )
    return trans, orient
