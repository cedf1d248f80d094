"""Synthetic edge-flow datasets and flow-file ingestion.

All randomness flows through the package-wide Philox generator
(:func:`hodgegp.gp.make_rng`), so every dataset is reproducible from its
provenance record (generator name, seed, parameters).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .complexes import Cochain, SimplicialComplex2, build_complex
from .errors import GenerationError, IngestionError, UsageError
from .gp import make_rng
from .io import (
    read_complex_json,
    read_flow_rows,
    simplex_label,
    write_complex_json,
)
from .spectral import eigendecompose

__all__ = [
    "Dataset",
    "random_complex",
    "sample_hodge_flow",
    "synth_forex",
    "load_flow_csv",
    "split",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """An edge flow on a complex with a train/test mask.

    ``flow`` is the ground truth; ``observations`` is the noisy copy models
    train on (identical when the generation noise is zero).  Edges can be
    marked unobserved via ``observed_mask``; the test set is the observed
    complement of the train mask.
    """

    complex: SimplicialComplex2
    flow: Cochain
    observations: Cochain
    train_mask: np.ndarray
    noise_level: float = 0.0
    provenance: dict = field(default_factory=dict)
    observed_mask: np.ndarray | None = None

    def __post_init__(self):
        mask = np.asarray(self.train_mask, dtype=bool)
        mask.flags.writeable = False
        object.__setattr__(self, "train_mask", mask)
        if self.observed_mask is None:
            object.__setattr__(self, "observed_mask", np.ones_like(mask))
        else:
            om = np.asarray(self.observed_mask, dtype=bool)
            om.flags.writeable = False
            object.__setattr__(self, "observed_mask", om)
        if mask.shape != (self.complex.n_edges,):
            raise UsageError("train mask must have one entry per edge")

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask & self.observed_mask)

    @property
    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.train_mask & self.observed_mask)


def _mask_from_ratio(n: int, ratio: float, rng) -> np.ndarray:
    if not 0.0 < ratio < 1.0:
        raise UsageError(f"train ratio must be in (0, 1), got {ratio}")
    n_train = int(round(ratio * n))
    if n_train < 2 or n - n_train < 2:
        raise UsageError(
            f"ratio {ratio} leaves fewer than 2 train or test edges out of {n}"
        )
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:n_train]] = True
    return mask


def random_complex(
    n_nodes: int, edge_prob: float, triangle_fill_ratio: float, seed: int = 0
) -> SimplicialComplex2:
    """Erdos-Renyi graph restricted to its largest connected component, with
    the given fraction of its 3-cliques closed as triangles."""
    if not 0.0 < edge_prob <= 1.0:
        raise UsageError("edge_prob must be in (0, 1]")
    if not 0.0 <= triangle_fill_ratio <= 1.0:
        raise UsageError("triangle_fill_ratio must be in [0, 1]")
    rng = make_rng(seed)
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    keep = rng.random(len(pairs)) < edge_prob
    edges = [p for p, k in zip(pairs, keep) if k]

    # largest connected component by union-find
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    roots = [find(i) for i in range(n_nodes)]
    sizes = {}
    for r in roots:
        sizes[r] = sizes.get(r, 0) + 1
    best = max(sizes, key=sizes.get)
    component = {i for i in range(n_nodes) if roots[i] == best}
    edges = [e for e in edges if e[0] in component]
    if len(component) < 2 or not edges:
        raise GenerationError(
            "largest connected component has no edges; raise edge_prob or n_nodes"
        )

    sc = build_complex(sorted(component), edges, infer_triangles=True)
    cliques = sc.triangles
    n_keep = int(round(triangle_fill_ratio * len(cliques)))
    chosen = sorted(rng.permutation(len(cliques))[:n_keep]) if cliques else []
    triangles = [cliques[i] for i in chosen]
    return build_complex(sorted(component), edges, triangles)


def _finish(sc, flow, noise, rng, provenance, train_mask=None) -> Dataset:
    observed = flow + noise * rng.standard_normal(sc.n_edges) if noise > 0 else flow
    if train_mask is None:
        train_mask = np.ones(sc.n_edges, dtype=bool)
    return Dataset(
        complex=sc,
        flow=Cochain(1, flow),
        observations=Cochain(1, observed),
        train_mask=train_mask,
        noise_level=noise,
        provenance=provenance,
    )


def sample_hodge_flow(
    sc: SimplicialComplex2,
    which: str = "mixed",
    seed: int = 0,
    noise: float = 0.0,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Dataset:
    """Draw a flow with prescribed Hodge structure.

    Gradient flows are ``b1.T @ z`` with standard-normal node values, curl
    flows ``b2 @ z`` with standard-normal triangle values, harmonic flows
    standard-normal coefficients on the harmonic basis; ``mixed`` sums the
    three with the given weights ``(harmonic, gradient, curl)``.
    """
    rng = make_rng(seed)
    parts = {}
    if which in ("gradient", "mixed"):
        parts["gradient"] = sc.b1.T @ rng.standard_normal(sc.n_nodes)
    if which in ("curl", "mixed"):
        if sc.n_triangles == 0 and which == "curl":
            raise GenerationError("complex has no triangles; no curl flow exists")
        parts["curl"] = (
            sc.b2 @ rng.standard_normal(sc.n_triangles)
            if sc.n_triangles
            else np.zeros(sc.n_edges)
        )
    if which in ("harmonic", "mixed"):
        basis = eigendecompose(sc).harmonic_vectors
        if basis.shape[1] == 0 and which == "harmonic":
            raise GenerationError("complex has no harmonic space (no holes)")
        parts["harmonic"] = (
            basis @ rng.standard_normal(basis.shape[1])
            if basis.shape[1]
            else np.zeros(sc.n_edges)
        )
    if not parts:
        raise UsageError(
            f"which must be 'gradient', 'curl', 'harmonic' or 'mixed', got {which!r}"
        )
    if which == "mixed":
        w_h, w_g, w_c = weights
        flow = (
            w_h * parts["harmonic"] + w_g * parts["gradient"] + w_c * parts["curl"]
        )
    else:
        flow = parts[which]
    provenance = {
        "generator": "sample_hodge_flow",
        "which": which,
        "seed": seed,
        "noise": noise,
        "weights": list(weights) if which == "mixed" else None,
    }
    return _finish(sc, flow, noise, rng, provenance)


def synth_forex(
    n_currencies: int = 25,
    pair_prob: float = 1.0,
    potential_scale: float = 1.0,
    noise: float = 0.0,
    seed: int = 0,
    relative_noise: bool = False,
) -> Dataset:
    """Arbitrage-free synthetic exchange market.

    Currencies carry log-valuations drawn from ``N(0, potential_scale^2)``;
    the log-rate on each exchangeable pair is the valuation difference, so
    every triangular exchange loop nets to zero.  Every 3-clique of
    exchangeable pairs is closed as a triangle.  With ``relative_noise``,
    the observation noise is ``noise * std(flow)``.
    """
    if n_currencies < 3:
        raise UsageError("need at least 3 currencies")
    rng = make_rng(seed)
    names = [f"C{i:02d}" for i in range(n_currencies)]
    pairs = [
        (names[i], names[j])
        for i in range(n_currencies)
        for j in range(i + 1, n_currencies)
    ]
    keep = rng.random(len(pairs)) < pair_prob
    edges = [p for p, k in zip(pairs, keep) if k]
    nodes_in = {n for e in edges for n in e}
    if len(nodes_in) < 3 or not edges:
        raise GenerationError("market too sparse; raise pair_prob")
    sc = build_complex(sorted(nodes_in), edges, infer_triangles=True)

    potentials = potential_scale * rng.standard_normal(sc.n_nodes)
    flow = sc.b1.T @ potentials
    sigma = noise * float(np.std(flow)) if relative_noise else noise
    provenance = {
        "generator": "synth_forex",
        "n_currencies": n_currencies,
        "pair_prob": pair_prob,
        "potential_scale": potential_scale,
        "noise": sigma,
        "relative_noise": relative_noise,
        "seed": seed,
    }
    return _finish(sc, flow, sigma, rng, provenance)


def split(dataset: Dataset, train_ratio: float, seed: int = 0) -> Dataset:
    """Re-draw the train/test mask uniformly at random over observed edges."""
    rng = make_rng(seed)
    observed = np.flatnonzero(dataset.observed_mask)
    sub_mask = _mask_from_ratio(len(observed), train_ratio, rng)
    mask = np.zeros(dataset.complex.n_edges, dtype=bool)
    mask[observed[sub_mask]] = True
    provenance = dict(dataset.provenance)
    provenance["split"] = {"train_ratio": train_ratio, "seed": seed}
    return replace(dataset, train_mask=mask, provenance=provenance)


def load_flow_csv(
    complex_file,
    flow_file,
    orientation_policy: str = "resign",
    train_ratio: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Load a complex (JSON) and an edge flow (CSV) into a dataset.

    Flow rows may reference an edge in either vertex order; under the
    ``resign`` policy a reversed row is stored with its sign flipped
    (alternating convention), while ``strict`` rejects reversed rows.  Edges
    missing from the file are marked unobserved.  The train mask comes from
    the file's ``split`` column when present, else a seeded random split.
    """
    if orientation_policy not in ("resign", "strict"):
        raise UsageError("orientation_policy must be 'resign' or 'strict'")
    sc = read_complex_json(complex_file)
    nodes_are_int = bool(sc.nodes) and isinstance(sc.nodes[0], (int, np.integer))
    rows = read_flow_rows(flow_file, nodes_are_int)

    values = np.zeros(sc.n_edges)
    observed = np.zeros(sc.n_edges, dtype=bool)
    split_col: dict[int, str] = {}
    any_split = False
    for label, value, split_tag, lineno in rows:
        if len(label) != 2:
            raise IngestionError(
                f"{flow_file}:{lineno}: {simplex_label(label)!r} is not an edge"
            )
        try:
            idx, sign = sc.edge_index(*label)
        except KeyError as exc:
            raise IngestionError(f"{flow_file}:{lineno}: {exc}") from exc
        if sign < 0 and orientation_policy == "strict":
            raise IngestionError(
                f"{flow_file}:{lineno}: edge {simplex_label(label)!r} is not in"
                " canonical orientation"
            )
        if observed[idx]:
            raise IngestionError(
                f"{flow_file}:{lineno}: duplicate row for edge"
                f" {simplex_label(sc.edges[idx])!r}"
            )
        observed[idx] = True
        values[idx] = sign * value
        if split_tag is not None:
            any_split = True
            split_col[idx] = split_tag

    if not observed.any():
        raise IngestionError(f"flow file {flow_file} contains no rows")
    if any_split:
        mask = np.zeros(sc.n_edges, dtype=bool)
        for idx in np.flatnonzero(observed):
            mask[idx] = split_col.get(idx) == "train"
    else:
        rng = make_rng(seed)
        obs_idx = np.flatnonzero(observed)
        mask = np.zeros(sc.n_edges, dtype=bool)
        mask[obs_idx[_mask_from_ratio(len(obs_idx), train_ratio, rng)]] = True

    provenance = {
        "generator": "load_flow_csv",
        "complex_file": str(complex_file),
        "flow_file": str(flow_file),
        "orientation_policy": orientation_policy,
    }
    flow = Cochain(1, values)
    return Dataset(
        complex=sc,
        flow=flow,
        observations=flow,
        train_mask=mask,
        noise_level=0.0,
        provenance=provenance,
        observed_mask=observed,
    )


def save_dataset(dataset: Dataset, directory) -> None:
    """Bundle directory: complex.json, flow.csv, mask.csv, provenance.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_complex_json(dataset.complex, directory / "complex.json")
    sc = dataset.complex
    with open(directory / "flow.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["simplex", "value", "truth"])
        for i, e in enumerate(sc.edges):
            if dataset.observed_mask[i]:
                writer.writerow(
                    [
                        simplex_label(e),
                        repr(float(dataset.observations.values[i])),
                        repr(float(dataset.flow.values[i])),
                    ]
                )
    with open(directory / "mask.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["simplex", "split"])
        for i, e in enumerate(sc.edges):
            if dataset.observed_mask[i]:
                writer.writerow(
                    [simplex_label(e), "train" if dataset.train_mask[i] else "test"]
                )
    payload = dict(dataset.provenance)
    payload["noise_level"] = dataset.noise_level
    (directory / "provenance.json").write_text(json.dumps(payload, indent=1))


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    sc = read_complex_json(directory / "complex.json")
    nodes_are_int = bool(sc.nodes) and isinstance(sc.nodes[0], (int, np.integer))

    observed = np.zeros(sc.n_edges, dtype=bool)
    obs_values = np.zeros(sc.n_edges)
    truth_values = np.zeros(sc.n_edges)
    with open(directory / "flow.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            label = row["simplex"].split("-")
            if nodes_are_int:
                label = [int(p) for p in label]
            idx, sign = sc.edge_index(*label)
            observed[idx] = True
            obs_values[idx] = sign * float(row["value"])
            truth_values[idx] = sign * float(row.get("truth", row["value"]))

    mask = np.zeros(sc.n_edges, dtype=bool)
    with open(directory / "mask.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            label = row["simplex"].split("-")
            if nodes_are_int:
                label = [int(p) for p in label]
            idx, _ = sc.edge_index(*label)
            mask[idx] = row["split"].strip().lower() == "train"

    provenance = json.loads((directory / "provenance.json").read_text())
    noise = provenance.pop("noise_level", 0.0)
    return Dataset(
        complex=sc,
        flow=Cochain(1, truth_values),
        observations=Cochain(1, obs_values),
        train_mask=mask,
        noise_level=noise,
        provenance=provenance,
        observed_mask=observed,
    )
