"""Observational dataset container and CSV serialization.

A dataset holds n rows of (x, t, y): covariates, assigned treatment, and
observed outcome. An optional binary column u carries a simulated hidden
confounder through to oracle evaluation; the modeling code never reads it.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Dataset:
    """Rows of (x, t, y) with an optional opaque u column.

    Attributes
    ----------
    x : ndarray, shape (n, d)
    t : ndarray, shape (n,)
    y : ndarray, shape (n,)
    u : ndarray, shape (n,), optional
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = field(default=None)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        t = np.asarray(self.t, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != t.shape[0] or t.shape[0] != y.shape[0]:
            raise InputError(
                f"row count mismatch: x has {x.shape[0]}, t has {t.shape[0]}, y has {y.shape[0]}"
            )
        if x.shape[0] == 0:
            raise InputError("dataset is empty")
        for name, arr in (("x", x), ("t", t), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite values in column {name}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if self.u is not None:
            u = np.asarray(self.u, dtype=float).ravel()
            if u.shape[0] != x.shape[0]:
                raise InputError("u column length does not match rows")
            object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        """Row subset (used by resampling and train/validation splits)."""
        idx = np.asarray(indices, dtype=int)
        u = self.u[idx] if self.u is not None else None
        return Dataset(x=self.x[idx], t=self.t[idx], y=self.y[idx], u=u)

    def digest(self) -> str:
        """Content hash of the rows, independent of in-memory layout."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.t).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        if self.u is not None:
            h.update(np.ascontiguousarray(self.u).tobytes())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        """Write rows as CSV with header ``u,x_0..x_{d-1},t,y`` (u if present)."""
        with open(path, "w", newline="") as f:
            f.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [f"x_{j}" for j in range(self.d)] + ["t", "y"]
        if self.u is not None:
            cols = ["u"] + cols
        writer.writerow(cols)
        for i in range(self.n):
            row = list(self.x[i]) + [self.t[i], self.y[i]]
            if self.u is not None:
                row = [self.u[i]] + row
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def read_csv(path) -> Dataset:
    """Load a dataset written by :meth:`Dataset.to_csv`.

    Accepts any column order as long as the header names the columns
    ``x_0..x_{d-1}``, ``t``, ``y`` and optionally ``u``.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"empty CSV file: {path}") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    x_cols = sorted(
        (h for h in header if h.startswith("x_")), key=lambda h: int(h[2:])
    )
    for required in ("t", "y"):
        if required not in header:
            raise InputError(f"missing column {required!r} in {path}")
    if not x_cols:
        raise InputError(f"no covariate columns (x_0, x_1, ...) in {path}")
    idx = {h: i for i, h in enumerate(header)}
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if data.size == 0:
        raise InputError(f"no data rows in {path}")
    x = data[:, [idx[c] for c in x_cols]]
    t = data[:, idx["t"]]
    y = data[:, idx["y"]]
    u = data[:, idx["u"]] if "u" in idx else None
    return Dataset(x=x, t=t, y=y, u=u)
