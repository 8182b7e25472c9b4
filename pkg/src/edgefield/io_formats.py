"""CSV and plain-text file formats.

All tables are UTF-8 CSV with LF line endings. Floats are serialized with
``repr``, the shortest representation that round-trips exactly, so
load(emit(x)) == x bitwise.
"""

from __future__ import annotations

import csv
import io
import os

import numpy as np

from .criteria import CriteriaTable
from .graph import ArealGraph
from .priors import FieldDraw
from .synth import Scenario

__all__ = [
    "write_edge_list",
    "write_dataset",
    "write_coords",
    "load_coords",
    "write_field_draws",
    "write_posterior_draws",
    "write_criteria",
    "load_criteria",
    "write_scenario",
    "load_scenario",
]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _open_w(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def write_edge_list(path, g: ArealGraph) -> None:
    with _open_w(path) as fh:
        fh.write("src,dst\n")
        for u, v in g.edges:
            fh.write(f"{u},{v}\n")


def write_dataset(path, data) -> None:
    k = data.k
    with _open_w(path) as fh:
        header = "id,y,expected" + "".join(f",x{j + 1}" for j in range(k))
        fh.write(header + "\n")
        for i in range(data.n):
            row = [str(i), str(int(data.y[i])), _fmt(data.expected[i])]
            row += [_fmt(v) for v in data.X[i]]
            fh.write(",".join(row) + "\n")


def write_coords(path, coords: np.ndarray) -> None:
    with _open_w(path) as fh:
        fh.write("id,x,y\n")
        for i, (x, y) in enumerate(coords):
            fh.write(f"{i},{_fmt(x)},{_fmt(y)}\n")


def load_coords(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "x", "y"]:
            raise ValueError(f"{path}: expected header 'id,x,y'")
        rows = {int(r[0]): (float(r[1]), float(r[2])) for r in reader if r}
    n = 1 + max(rows)
    if sorted(rows) != list(range(n)):
        raise ValueError(f"{path}: ids must be 0..{n - 1}")
    return np.array([rows[i] for i in range(n)])


def write_field_draws(path, draws: list[FieldDraw]) -> None:
    """Header ``draw,u,rho.1..p,theta.1..n``; u/rho columns are empty for CAR."""
    n = draws[0].theta.size
    p = draws[0].rho.size if draws[0].rho is not None else 0
    with _open_w(path) as fh:
        header = ["draw", "u"] + [f"rho.{j + 1}" for j in range(p)] \
            + [f"theta.{j + 1}" for j in range(n)]
        fh.write(",".join(header) + "\n")
        for j, d in enumerate(draws):
            row = [str(j), "" if d.u is None else _fmt(d.u)]
            if p:
                row += [_fmt(v) for v in d.rho]
            row += [_fmt(v) for v in d.theta]
            fh.write(",".join(row) + "\n")


def write_posterior_draws(path, post) -> None:
    """Header ``chain,iter,log_post,<constrained parameter names>``."""
    with _open_w(path) as fh:
        fh.write(",".join(["chain", "iter", "log_post"] + post.param_names) + "\n")
        for c in range(post.n_chains):
            for s in range(post.n_samples):
                row = [str(c), str(s), _fmt(post.log_post[c, s])]
                row += [_fmt(v) for v in post.constrained[c, s]]
                fh.write(",".join(row) + "\n")


def write_criteria(path, tables: list[CriteriaTable]) -> None:
    with _open_w(path) as fh:
        fh.write("model,Dbar,pD,DIC,WAIC,LOOIC,RMSE\n")
        for t in tables:
            fh.write(t.model + "," + ",".join(_fmt(v) for v in t.values()) + "\n")


def load_criteria(path) -> list[CriteriaTable]:
    tables = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["model", "Dbar", "pD", "DIC", "WAIC", "LOOIC", "RMSE"]
        if header is None or [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            if not row:
                continue
            tables.append(CriteriaTable(row[0], *[float(v) for v in row[1:7]]))
    return tables


def write_scenario(path, scenario: Scenario) -> None:
    with _open_w(path) as fh:
        for k, v in scenario.as_dict().items():
            fh.write(f"{k}={_fmt(v) if isinstance(v, float) else v}\n")


def load_scenario(path) -> Scenario:
    kwargs = {}
    ints = {"rows", "cols"}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            k = k.strip()
            kwargs[k] = int(v) if k in ints else float(v)
    return Scenario(**kwargs)
