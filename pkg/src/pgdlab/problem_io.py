"""JSON problem files.

A problem file is a JSON object with fields

* ``A``: matrix, either nested lists (rows) or ``{"shape": [m, n], "data":
  [...]}`` with the data flattened row-major,
* ``b``: array,
* ``constraint``: ``{"type": "affine"|"sparse"|"sphere"|"lowrank", ...}`` with
  the variant fields ``C``/``d``, ``s``, ``r``/``shape``,
* optional ``x_star`` and ``x0`` arrays.

Validation errors carry the JSON path of the offending field.
"""

from __future__ import annotations

import json

import numpy as np

from .constraints import constraint_from_json
from .engine import Problem
from .errors import ProblemFileError


def _matrix_from_json(obj, path):
    if isinstance(obj, dict):
        try:
            shape = tuple(int(v) for v in obj["shape"])
            data = np.asarray(obj["data"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemFileError(path, f"bad matrix object: {exc}") from exc
        if data.size != shape[0] * shape[1]:
            raise ProblemFileError(
                path, f"data length {data.size} does not match shape {shape}"
            )
        return data.reshape(shape)  # row-major
    try:
        mat = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(path, f"not a numeric matrix: {exc}") from exc
    if mat.ndim != 2:
        raise ProblemFileError(path, f"expected a matrix, got {mat.ndim} dimensions")
    return mat


def _vector_from_json(obj, path):
    try:
        vec = np.asarray(obj, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(path, f"not a numeric array: {exc}") from exc
    return vec


def load_problem(path_or_file):
    """Read a problem file; returns (Problem, x_star or None, x0 or None)."""
    if hasattr(path_or_file, "read"):
        try:
            doc = json.load(path_or_file)
        except json.JSONDecodeError as exc:
            raise ProblemFileError("$", f"invalid JSON: {exc}") from exc
    else:
        try:
            with open(path_or_file, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ProblemFileError("$", f"cannot read {path_or_file}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ProblemFileError("$", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFileError("$", "top-level JSON value must be an object")
    for key in ("A", "b", "constraint"):
        if key not in doc:
            raise ProblemFileError(key, "missing required field")

    A = _matrix_from_json(doc["A"], "A")
    b = _vector_from_json(doc["b"], "b")
    constraint_doc = doc["constraint"]
    if isinstance(constraint_doc, dict) and isinstance(constraint_doc.get("C"), dict):
        constraint_doc = dict(constraint_doc)
        constraint_doc["C"] = _matrix_from_json(constraint_doc["C"], "constraint.C").tolist()
    try:
        constraint = constraint_from_json(constraint_doc, ambient_dim=A.shape[1])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError("constraint", str(exc)) from exc
    try:
        problem = Problem(A, b, constraint)
    except ValueError as exc:
        raise ProblemFileError("$", str(exc)) from exc

    x_star = None
    if "x_star" in doc:
        x_star = _vector_from_json(doc["x_star"], "x_star")
        if x_star.size != constraint.n:
            raise ProblemFileError(
                "x_star", f"length {x_star.size} does not match dimension {constraint.n}"
            )
    x0 = None
    if "x0" in doc:
        x0 = _vector_from_json(doc["x0"], "x0")
        if x0.size != constraint.n:
            raise ProblemFileError(
                "x0", f"length {x0.size} does not match dimension {constraint.n}"
            )
    return problem, x_star, x0


def save_problem(path, problem, x_star=None, x0=None):
    """Write a problem file in the format accepted by :func:`load_problem`."""
    m, n = problem.A.shape
    doc = {
        "A": {"shape": [m, n], "data": problem.A.reshape(-1).tolist()},
        "b": problem.b.tolist(),
        "constraint": problem.constraint.to_json(),
    }
    if x_star is not None:
        doc["x_star"] = np.asarray(x_star, dtype=float).reshape(-1).tolist()
    if x0 is not None:
        doc["x0"] = np.asarray(x0, dtype=float).reshape(-1).tolist()
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")
