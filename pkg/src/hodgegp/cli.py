"""Command-line driver.

Subcommands: ``decompose`` (Hodge-split a flow file), ``fit-predict`` (the
full regression protocol with restarts), ``sample`` (prior draws) and
``diffuse`` (edge-diffusion trajectories).  Exit codes: 0 success, 1 usage
error, 2 ingestion error, 3 numerical error, 4 partial restart failure.
Set ``HODGEGP_LOG`` (debug/info/warning) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gp
from .errors import (
    GenerationError,
    HodgeGPError,
    IngestionError,
    NumericalError,
    UsageError,
)
from .io import read_complex_json, read_flow_rows, simplex_label, write_spectrum_json
from .kernels import KernelSpec, SpectrumFn
from .spectral import edge_diffusion, eigendecompose, hodge_decompose

logger = logging.getLogger("hodgegp.cli")

SYNTH_KINDS = ("forex", "gradient", "curl", "harmonic", "mixed")


@dataclass
class RunConfig:
    """Everything needed to reproduce a fit-predict run."""

    command: str
    kernel: str
    complex_path: str | None
    flow_path: str | None
    synth: str | None
    synth_params: dict
    train_ratio: float
    restarts: int
    iters: int
    lr: float
    seed: int
    truncate: int | None
    components: bool
    select_best: bool
    fix_nu: float | None
    out: str


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we own the exit codes
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hodgegp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="Hodge-decompose a flow file")
    p.add_argument("--complex", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("fit-predict", help="GP regression with restarts")
    p.add_argument("--complex")
    p.add_argument("--flow")
    p.add_argument("--synth", choices=SYNTH_KINDS)
    p.add_argument("--n-currencies", type=int, default=25)
    p.add_argument("--pair-prob", type=float, default=1.0)
    p.add_argument("--potential-scale", type=float, default=1.0)
    p.add_argument("--n-nodes", type=int, default=20)
    p.add_argument("--edge-prob", type=float, default=0.4)
    p.add_argument("--fill", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--relative-noise", action="store_true")
    p.add_argument("--kernel", choices=gp.KERNEL_NAMES, default="hc-matern")
    p.add_argument("--train-ratio", type=float, default=0.2)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncate", type=int, default=None, metavar="L")
    p.add_argument("--components", action="store_true",
                   help="also write per-component posterior columns")
    p.add_argument("--select-best", action="store_true",
                   help="report the best restart (by final loss) instead of mean/std only")
    p.add_argument("--fix-nu", type=float, default=None,
                   help="fix the Matern smoothness instead of learning it")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_predict)

    p = sub.add_parser("sample", help="draw prior samples from an edge kernel")
    p.add_argument("--complex", required=True)
    p.add_argument("--kernel", choices=gp.KERNEL_NAMES, default="hc-matern")
    p.add_argument("--block", choices=["H", "G", "C"], default=None,
                   help="sample a single Hodge subspace kernel instead")
    p.add_argument("--kernel-params", default=None,
                   help="JSON file with a kernel spec overriding the defaults")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("diffuse", help="edge diffusion of an initial flow")
    p.add_argument("--complex", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--times", required=True, help="comma-separated time grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffuse)
    return parser


def _read_full_flow(complex_path, flow_path):
    """Complex plus a flow covering every edge (signs canonicalized)."""
    sc = read_complex_json(complex_path)
    nodes_are_int = isinstance(sc.nodes[0], (int, np.integer))
    values = np.zeros(sc.n_edges)
    seen = np.zeros(sc.n_edges, dtype=bool)
    for label, value, _split, lineno in read_flow_rows(flow_path, nodes_are_int):
        try:
            idx, sign = sc.edge_index(*label)
        except (KeyError, TypeError) as exc:
            raise IngestionError(f"{flow_path}:{lineno}: {exc}") from exc
        if seen[idx]:
            raise IngestionError(f"{flow_path}:{lineno}: duplicate edge row")
        seen[idx] = True
        values[idx] = sign * value
    if not seen.all():
        missing = simplex_label(sc.edges[int(np.flatnonzero(~seen)[0])])
        raise IngestionError(
            f"flow file {flow_path} must cover every edge (missing {missing!r})"
        )
    return sc, values


def cmd_decompose(args) -> int:
    sc, values = _read_full_flow(args.complex, args.flow)
    parts = hodge_decompose(sc, values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "components.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["simplex", "value", "f_h", "f_g", "f_c", "reconstruction"])
        recon = parts.reconstruct()
        for i, e in enumerate(sc.edges):
            writer.writerow(
                [
                    simplex_label(e),
                    repr(float(values[i])),
                    repr(float(parts.f_h.values[i])),
                    repr(float(parts.f_g.values[i])),
                    repr(float(parts.f_c.values[i])),
                    repr(float(recon[i])),
                ]
            )
    fractions = parts.energy_fractions()
    energies = parts.energies()
    report = {
        "energy_fractions": {
            "harmonic": fractions[0],
            "gradient": fractions[1],
            "curl": fractions[2],
        },
        "energies": {
            "harmonic": energies[0],
            "gradient": energies[1],
            "curl": energies[2],
        },
        "reconstruction_relative_error": float(
            np.linalg.norm(recon - values) / max(np.linalg.norm(values), 1e-300)
        ),
    }
    (out / "energy.json").write_text(json.dumps(report, indent=1))
    print(
        "energy fractions: harmonic %.6f gradient %.6f curl %.6f"
        % fractions
    )
    return 0


def _make_dataset(args) -> data_mod.Dataset:
    if args.synth is not None and args.complex is not None:
        raise UsageError("pass either --synth or --complex/--flow, not both")
    if args.synth is None:
        if args.complex is None or args.flow is None:
            raise UsageError("fit-predict needs --synth or both --complex and --flow")
        return data_mod.load_flow_csv(
            args.complex, args.flow, train_ratio=args.train_ratio, seed=args.seed
        )
    if args.synth == "forex":
        ds = data_mod.synth_forex(
            n_currencies=args.n_currencies,
            pair_prob=args.pair_prob,
            potential_scale=args.potential_scale,
            noise=args.noise,
            relative_noise=args.relative_noise,
            seed=(args.seed, 0),
        )
    else:
        sc = data_mod.random_complex(
            args.n_nodes, args.edge_prob, args.fill, seed=(args.seed, 0)
        )
        noise = args.noise
        if args.relative_noise:
            probe = data_mod.sample_hodge_flow(sc, args.synth, seed=(args.seed, 1))
            noise = args.noise * float(np.std(probe.flow.values))
        ds = data_mod.sample_hodge_flow(sc, args.synth, seed=(args.seed, 1), noise=noise)
    return data_mod.split(ds, args.train_ratio, seed=(args.seed, 2))


def cmd_fit_predict(args) -> int:
    config = RunConfig(
        command="fit-predict",
        kernel=args.kernel,
        complex_path=args.complex,
        flow_path=args.flow,
        synth=args.synth,
        synth_params={
            "n_currencies": args.n_currencies,
            "pair_prob": args.pair_prob,
            "potential_scale": args.potential_scale,
            "n_nodes": args.n_nodes,
            "edge_prob": args.edge_prob,
            "fill": args.fill,
            "noise": args.noise,
            "relative_noise": args.relative_noise,
        },
        train_ratio=args.train_ratio,
        restarts=args.restarts,
        iters=args.iters,
        lr=args.lr,
        seed=args.seed,
        truncate=args.truncate,
        components=args.components,
        select_best=args.select_best,
        fix_nu=args.fix_nu,
        out=args.out,
    )
    dataset = _make_dataset(args)
    sc = dataset.complex
    train_idx = dataset.train_indices
    test_idx = dataset.test_indices
    y_train = dataset.observations.values[train_idx]
    y_test = dataset.observations.values[test_idx]
    logger.info(
        "dataset: %d nodes, %d edges, %d triangles; train %d test %d",
        sc.n_nodes, sc.n_edges, sc.n_triangles, len(train_idx), len(test_idx),
    )

    spectrum = None
    if args.kernel not in ("line-graph-matern", "line-graph-diffusion"):
        spectrum = eigendecompose(sc, truncation=args.truncate)
    model = gp.build_model(
        args.kernel, sc=sc, spectrum=spectrum,
        learn_nu=args.fix_nu is None,
        fixed_nu=args.fix_nu if args.fix_nu is not None else 1.5,
    )
    if args.components and not model.has_components:
        raise UsageError(
            f"--components needs a Hodge-structured kernel, not {args.kernel!r}"
        )

    rows, fitted = [], []
    for r in range(args.restarts):
        try:
            fit = gp.fit(
                model, train_idx, y_train,
                iters=args.iters, lr=args.lr, seed=(args.seed, 10 + r),
            )
            post = gp.predict(fit, test_idx)
            rmse, nlpd = gp.metrics(post, y_test)
            rows.append(
                {
                    "restart": r,
                    "rmse": rmse,
                    "nlpd": nlpd,
                    "final_loss": float(fit.loss_trace[-1]),
                    "failed": False,
                }
            )
            fitted.append(fit)
            logger.info("restart %d: rmse %.4g nlpd %.4g", r, rmse, nlpd)
        except NumericalError as exc:
            rows.append({"restart": r, "failed": True, "error": str(exc)})
            fitted.append(None)
            logger.warning("restart %d failed: %s", r, exc)

    ok = [row for row in rows if not row["failed"]]
    if not ok:
        raise NumericalError("every restart failed")
    aggregate = {
        "rmse_mean": float(np.mean([r["rmse"] for r in ok])),
        "rmse_std": float(np.std([r["rmse"] for r in ok])),
        "nlpd_mean": float(np.mean([r["nlpd"] for r in ok])),
        "nlpd_std": float(np.std([r["nlpd"] for r in ok])),
        "n_restarts": len(rows),
        "n_failed": len(rows) - len(ok),
    }
    best_row = min(ok, key=lambda r: r["final_loss"])
    best = fitted[best_row["restart"]]
    results = {
        "run_config": asdict(config),
        "dataset_provenance": dataset.provenance,
        "restarts": rows,
        "aggregate": aggregate,
        "best_restart": best_row["restart"],
    }
    if args.select_best:
        results["selected"] = {"rmse": best_row["rmse"], "nlpd": best_row["nlpd"]}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(json.dumps(results, indent=1))

    post = gp.predict(best, test_idx, components=args.components)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["simplex", "mean", "variance"]
        if args.components:
            header += ["mean_h", "mean_g", "mean_c", "var_h", "var_g", "var_c"]
        writer.writerow(header)
        for pos, i in enumerate(test_idx):
            row = [
                simplex_label(sc.edges[i]),
                repr(float(post.mean[pos])),
                repr(float(post.variance[pos])),
            ]
            if args.components:
                comp = post.components
                row += [repr(float(comp[c][0][pos])) for c in ("harmonic", "gradient", "curl")]
                row += [repr(float(comp[c][1][pos])) for c in ("harmonic", "gradient", "curl")]
            writer.writerow(row)

    with open(out / "kernel_spectrum.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "lambda", "psi"])
        for block, lam, psi in model.spectrum_table(best.raw_params[:-1]):
            writer.writerow([block, repr(lam), repr(psi)])

    checkpoint = {
        "kernel_spec": best.kernel_spec.to_dict(),
        "unconstrained_params": dict(
            zip(best.param_names, (float(x) for x in best.raw_params))
        ),
        "constrained_params": best.constrained_params(),
        "noise_variance": best.noise_variance,
        "loss_trace": best.loss_trace.tolist(),
    }
    (out / "checkpoint.json").write_text(json.dumps(checkpoint, indent=1))
    if spectrum is not None:
        write_spectrum_json(spectrum, out / "spectrum.json")

    print(
        f"{args.kernel}: rmse {aggregate['rmse_mean']:.4g} +- {aggregate['rmse_std']:.4g}, "
        f"nlpd {aggregate['nlpd_mean']:.4g} +- {aggregate['nlpd_std']:.4g} "
        f"({len(ok)}/{len(rows)} restarts)"
    )
    return 4 if aggregate["n_failed"] else 0


def _default_spec(kernel: str, block: str | None) -> KernelSpec:
    matern = SpectrumFn("matern", sigma2=1.0, kappa=1.0, nu=1.5)
    diffusion = SpectrumFn("diffusion", sigma2=1.0, kappa=1.0)
    if block is not None:
        return KernelSpec(kind="subspace_edge", block=block, fn=matern)
    if kernel in ("hc-matern", "hc-diffusion"):
        fn = matern if kernel == "hc-matern" else diffusion
        return KernelSpec(kind="hc_edge", harmonic_sigma2=1.0, gradient_fn=fn, curl_fn=fn)
    if kernel in ("matern", "diffusion"):
        return KernelSpec(kind="non_hc_edge", fn=matern if kernel == "matern" else diffusion)
    if kernel in ("line-graph-matern", "line-graph-diffusion"):
        return KernelSpec(
            kind="line_graph_node",
            fn=matern if kernel == "line-graph-matern" else diffusion,
        )
    if kernel == "grad-of-node":
        return KernelSpec(kind="grad_of_node", node_fn=matern)
    if kernel == "composed-hc":
        return KernelSpec(kind="composed_hc", node_fn=matern, triangle_fn=matern,
                          harmonic_sigma2=1.0)
    if kernel == "hodge-pinv":
        return KernelSpec(kind="hodge_laplacian_pinv", sigma2=1.0)
    raise UsageError(f"unknown kernel {kernel!r}")


def cmd_sample(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    sc = read_complex_json(args.complex)
    if args.kernel_params:
        try:
            spec = KernelSpec.from_dict(json.loads(Path(args.kernel_params).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read kernel params: {exc}") from exc
    else:
        spec = _default_spec(args.kernel, args.block)
    spectrum = None
    if spec.kind != "line_graph_node":
        spectrum = eigendecompose(sc)
    model = gp.build_model(spec, sc=sc, spectrum=spectrum)
    samples = gp.sample_prior(model, spec, seed=args.seed, count=args.count)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["simplex"] + [f"sample{i}" for i in range(args.count)])
        for i, e in enumerate(sc.edges):
            writer.writerow([simplex_label(e)] + [repr(float(v)) for v in samples[:, i]])
    print(f"wrote {args.count} samples over {sc.n_edges} edges")
    return 0


def cmd_diffuse(args) -> int:
    sc, values = _read_full_flow(args.complex, args.flow)
    try:
        times = [float(t) for t in args.times.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad --times grid: {exc}") from exc
    if not times:
        raise UsageError("--times must contain at least one value")
    spectrum = eigendecompose(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "simplex", "value"])
        for t in times:
            state = edge_diffusion(sc, values, args.mu, args.gamma, t, spectrum=spectrum)
            for e, v in zip(sc.edges, state.values):
                writer.writerow([repr(float(t)), simplex_label(e), repr(float(v))])
    print(f"wrote trajectory at {len(times)} times")
    return 0


def main(argv=None) -> int:
    level = os.environ.get("HODGEGP_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return 2
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except HodgeGPError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
