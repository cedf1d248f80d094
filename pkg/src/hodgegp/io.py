"""File formats: complex JSON, cochain/flow CSV, spectrum exports, bundles.

Simplices are encoded as hyphen-joined node labels (``3``, ``1-2``,
``1-2-3`` or ``EUR-USD``), which restricts string node labels to
hyphen-free names.  Values are written with ``repr`` so float round-trips
are exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .complexes import Cochain, SimplicialComplex2, build_complex
from .errors import IngestionError
from .spectral import HodgeSpectrum

__all__ = [
    "simplex_label",
    "write_complex_json",
    "read_complex_json",
    "write_cochain_csv",
    "read_flow_rows",
    "write_spectrum_json",
    "write_eigenvectors_csv",
]


def simplex_label(simplex) -> str:
    if isinstance(simplex, (tuple, list)):
        return "-".join(str(s) for s in simplex)
    return str(simplex)


def _split_label(label: str, nodes_are_int: bool):
    parts = label.strip().split("-")
    if nodes_are_int:
        try:
            return tuple(int(p) for p in parts)
        except ValueError as exc:
            raise IngestionError(f"cannot parse simplex label {label!r}") from exc
    return tuple(parts)


def write_complex_json(sc: SimplicialComplex2, path) -> None:
    payload = {
        "nodes": list(sc.nodes),
        "edges": [list(e) for e in sc.edges],
        "triangles": [list(t) for t in sc.triangles],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def read_complex_json(path) -> SimplicialComplex2:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read complex file {path}: {exc}") from exc
    for key in ("nodes", "edges"):
        if key not in payload:
            raise IngestionError(f"complex file {path} lacks the {key!r} list")
    return build_complex(
        payload["nodes"], payload["edges"], payload.get("triangles", [])
    )


def write_cochain_csv(sc: SimplicialComplex2, cochain, path, degree: int = 1) -> None:
    """Write ``simplex,value`` rows in canonical simplex order."""
    if isinstance(cochain, Cochain):
        degree = cochain.degree
        values = cochain.values
    else:
        values = np.asarray(cochain, dtype=float)
    simplices = {0: sc.nodes, 1: sc.edges, 2: sc.triangles}[degree]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["simplex", "value"])
        for s, v in zip(simplices, values):
            writer.writerow([simplex_label(s), repr(float(v))])


def read_flow_rows(path, nodes_are_int: bool):
    """Parse a flow CSV into ``(simplex_tuple, value, split_or_None)`` rows.

    The header must contain ``simplex`` and ``value``; a ``split`` column
    with train/test entries is honored when present.
    """
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"simplex", "value"} <= set(
                reader.fieldnames
            ):
                raise IngestionError(
                    f"flow file {path} must have a 'simplex,value' header"
                )
            has_split = "split" in reader.fieldnames
            for lineno, row in enumerate(reader, start=2):
                label = _split_label(row["simplex"], nodes_are_int)
                try:
                    value = float(row["value"])
                except (TypeError, ValueError) as exc:
                    raise IngestionError(
                        f"{path}:{lineno}: bad value {row['value']!r}"
                    ) from exc
                split = row["split"].strip().lower() if has_split else None
                if split is not None and split not in ("train", "test"):
                    raise IngestionError(
                        f"{path}:{lineno}: split must be 'train' or 'test', got {split!r}"
                    )
                rows.append((label, value, split, lineno))
    except OSError as exc:
        raise IngestionError(f"cannot read flow file {path}: {exc}") from exc
    return rows


def write_spectrum_json(spectrum: HodgeSpectrum, path) -> None:
    """Per-block eigenvalues and classification counts."""
    payload = {
        "n_edges": spectrum.n_edges,
        "truncated": spectrum.truncated,
        "retained": spectrum.retained,
        "counts": {
            "harmonic": spectrum.n_harmonic,
            "gradient": spectrum.n_gradient,
            "curl": spectrum.n_curl,
        },
        "eigenvalues": {
            "harmonic": spectrum.harmonic_values.tolist(),
            "gradient": spectrum.gradient_values.tolist(),
            "curl": spectrum.curl_values.tolist(),
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def write_eigenvectors_csv(sc: SimplicialComplex2, spectrum: HodgeSpectrum, path) -> None:
    """One row per edge: the full eigenvector matrix, block-labelled columns."""
    header = ["simplex"]
    for block, count in (
        ("H", spectrum.n_harmonic),
        ("G", spectrum.n_gradient),
        ("C", spectrum.n_curl),
    ):
        header.extend(f"{block}{i}" for i in range(count))
    basis = spectrum.basis()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for e, row in zip(sc.edges, basis):
            writer.writerow([simplex_label(e)] + [repr(float(x)) for x in row])
