"""Text serialization of models, datasets, grids and closed-loop traces.

Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly.  Model files are CSV blocks introduced by ``[section]``
lines after a ``# key=value`` header.
"""
from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .autonomous import AutonomousModel
from .control import ControlSurrogate
from .exceptions import ConfigurationError
from .kernels import WendlandKernel
from .mpc import ClosedLoopTrace
from .sets import ClusterSet
from .systems import ClusterDataset


def fmt(v) -> str:
    return format(float(v), ".17g")


def _row(values) -> str:
    return ",".join(fmt(v) for v in values)


def _header(kind, **fields) -> list:
    return [f"# kedmd {kind}", "# " + ",".join(f"{k}={v}" for k, v in fields.items())]


def _parse(path):
    kind, meta, sections, current = None, {}, {}, None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("# kedmd "):
            kind = line[len("# kedmd "):].strip()
        elif line.startswith("#"):
            for item in line[1:].split(","):
                key, _, val = item.strip().partition("=")
                meta[key] = val
        elif line.startswith("["):
            current = line.strip()[1:-1]
            sections[current] = []
        else:
            if current is None:
                raise ConfigurationError(f"{path}: data before first section")
            sections[current].append([float(v) for v in line.split(",")])
    return kind, meta, {k: np.array(v, dtype=float) for k, v in sections.items()}


def _kernel_fields(kernel: WendlandKernel):
    return dict(k=kernel.smoothness, sigma=fmt(kernel.support_radius))


def save_autonomous(model: AutonomousModel, path):
    lines = _header(
        "autonomous", n=model.clusters.dim, **_kernel_fields(model.kernel), lam=fmt(model.lam), d=model.d
    )
    lines.append("[clusters]")
    lines += [_row(p) for p in model.clusters.points]
    lines.append("[koopman]")
    lines += [_row(r) for r in model.koopman]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_autonomous(path) -> AutonomousModel:
    kind, meta, sec = _parse(path)
    if kind != "autonomous":
        raise ConfigurationError(f"{path} holds a '{kind}' model, expected 'autonomous'")
    n, d = int(meta["n"]), int(meta["d"])
    kernel = WendlandKernel(n, int(meta["k"]), float(meta["sigma"]))
    K = sec["koopman"].reshape(d, d)
    K.setflags(write=False)
    return AutonomousModel(kernel, ClusterSet(sec["clusters"].reshape(d, n)), K, float(meta["lam"]))


def save_surrogate(model: ControlSurrogate, path):
    n, m, d = model.n, model.m, model.d
    lines = _header("control", n=n, m=m, **_kernel_fields(model.kernel), lam=fmt(model.lam), d=d)
    lines.append("[clusters]")
    lines += [_row(p) for p in model.clusters.points]
    lines.append("[H]")
    lines += [_row(H.ravel()) for H in model.H]
    for j in range(m + 1):
        lines.append(f"[coef_{j}]")
        lines += [_row(r) for r in model.coef[j]]
    if model.pinv_norms is not None:
        lines.append("[pinv_norms]")
        lines.append(_row(model.pinv_norms))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_surrogate(path) -> ControlSurrogate:
    kind, meta, sec = _parse(path)
    if kind != "control":
        raise ConfigurationError(f"{path} holds a '{kind}' model, expected 'control'")
    n, m, d = int(meta["n"]), int(meta["m"]), int(meta["d"])
    kernel = WendlandKernel(n, int(meta["k"]), float(meta["sigma"]))
    coef = np.stack([sec[f"coef_{j}"].reshape(n, d) for j in range(m + 1)])
    H = sec["H"].reshape(d, n, m + 1)
    norms = sec["pinv_norms"].ravel() if "pinv_norms" in sec else None
    for a in (coef, H) + ((norms,) if norms is not None else ()):
        a.setflags(write=False)
    clusters = ClusterSet(sec["clusters"].reshape(d, n))
    return ControlSurrogate(kernel, clusters, coef, H, float(meta["lam"]), norms)


def save_dataset(data: ClusterDataset, path):
    n, m = data.n, data.m
    lines = [f"# n={n}", f"# m={m}", f"# d={data.d}", f"# eps_c={fmt(data.eps_c)}", f"# seed={data.seed}"]
    lines += [f"# center,{i},{_row(p)}" for i, p in enumerate(data.clusters.points)]
    cols = (["cluster_index"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)]
            + [f"xplus_{i + 1}" for i in range(n)])
    lines.append(",".join(cols))
    for i, (X, U, Xp) in enumerate(zip(data.states, data.controls, data.successors)):
        for x, u, xp in zip(X, U, Xp):
            lines.append(f"{i}," + _row(np.concatenate([x, u, xp])))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> ClusterDataset:
    meta, centers, rows = {}, {}, []
    header_seen = False
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# center,"):
            _, i, *vals = line[2:].split(",")
            centers[int(i)] = [float(v) for v in vals]
        elif line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        elif not header_seen:
            header_seen = True
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    n, m, d = int(meta["n"]), int(meta["m"]), int(meta["d"])
    arr = np.array(rows).reshape(-1, 1 + 2 * n + m)
    idx = arr[:, 0].astype(int)
    states, controls, succ = [], [], []
    for i in range(d):
        block = arr[idx == i]
        states.append(block[:, 1:1 + n])
        controls.append(block[:, 1 + n:1 + n + m])
        succ.append(block[:, 1 + n + m:])
    seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
    clusters = ClusterSet(np.array([centers[i] for i in range(d)]))
    return ClusterDataset(clusters, tuple(states), tuple(controls), tuple(succ), float(meta["eps_c"]), m, seed)


def save_grid(clusters: ClusterSet, path):
    lines = ["index," + ",".join(f"x{i + 1}" for i in range(clusters.dim))]
    lines += [f"{i}," + _row(p) for i, p in enumerate(clusters.points)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def trace_csv(trace: ClosedLoopTrace) -> str:
    X = trace.state_array()
    n = X.shape[1]
    m = len(trace.controls[0]) if trace.controls else 0
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
               + ["norm_x", "stage_cost", "ocp_value", "solver_iters"])
    for k, x in enumerate(X):
        row = [k] + [fmt(v) for v in x]
        if k < trace.steps:
            row += [fmt(v) for v in trace.controls[k]]
            row += [fmt(np.linalg.norm(x)), fmt(trace.stage_costs[k]), fmt(trace.values[k]), trace.iterations[k]]
        else:
            # final state: no control applied yet
            row += [""] * m + [fmt(np.linalg.norm(x)), "", "", ""]
        w.writerow(row)
    return buf.getvalue()


def save_trace(trace: ClosedLoopTrace, path):
    Path(path).write_text(trace_csv(trace), encoding="utf-8")


def load_trace(path) -> ClosedLoopTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    n = sum(1 for h in head if h.startswith("x"))
    m = sum(1 for h in head if h.startswith("u"))
    trace = ClosedLoopTrace()
    for r in rows[1:]:
        trace.states.append(np.array([float(v) for v in r[1:1 + n]]))
        if r[1 + n] != "":
            trace.controls.append(np.array([float(v) for v in r[1 + n:1 + n + m]]))
            trace.stage_costs.append(float(r[2 + n + m]))
            trace.values.append(float(r[3 + n + m]))
            trace.iterations.append(int(r[4 + n + m]))
    return trace
