"""Command-line front end: parsing, CSV ingestion, batch runs, reports.

Subcommands: estimate, shapley, reproduce, verify-kernels.  Exit codes:
0 success, 1 usage or parse problems, 2 degenerate output or kernel,
3 violated estimator assumption.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import kernels, testbed
from .data import Categorical, Curve, DistSample, SampleSet, column_kind
from .errors import (
    AssumptionViolatedError,
    DegenerateKernelError,
    DegenerateOutputError,
    DomainError,
    KgsaError,
    ParseError,
)
from .estimators import (
    EstimatorConfig,
    double_loop_mmd,
    hsic_stat,
    hsic_workspace,
    mmd_from_columns,
    pick_freeze_design,
    rank_mmd,
)
from .experiments import (
    REPRODUCERS,
    ResultBundle,
    calibrate_distribution_embedding,
    config_hash,
    sobolev_product,
    summarize,
    unit_rescale,
    write_rows_csv,
)
from .kernels import (
    Dirac,
    DistributionEmbedding,
    DurrandeZeroMean,
    Gaussian,
    GlobalAlignment,
    Linear,
    SobolevZeroMean,
    SteinZeroMean,
    WassersteinEmbedding,
)
from .marginals import Empirical, Normal, Uniform
from .sampling import GaussianCopula, IndependentMarginals, substream

ESTIMATORS = ("double-loop", "pick-freeze", "rank", "knn", "hsic-u", "hsic-v")


# --------------------------------------------------------------------------
# Spec string parsing
# --------------------------------------------------------------------------


def _spec_args(body: str) -> tuple[list[str], dict]:
    """'a,b,k=v' -> (['a', 'b'], {'k': 'v'})."""
    pos, kw = [], {}
    if body:
        for part in body.split(","):
            if "=" in part:
                k, v = part.split("=", 1)
                kw[k.strip()] = v.strip()
            else:
                pos.append(part.strip())
    return pos, kw


def _num(token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number for {what}, got {token!r}")


def parse_marginal(token: str):
    """'uniform:0,1', 'normal:0,1' or 'empirical:<csv path>,<column>'."""
    name, _, body = token.partition(":")
    pos, kw = _spec_args(body)
    name = name.strip().lower()
    if name == "uniform":
        lo = _num(kw.get("low", pos[0] if pos else "0"), "uniform low")
        hi = _num(kw.get("high", pos[1] if len(pos) > 1 else "1"), "uniform high")
        return Uniform(lo, hi)
    if name == "normal":
        mean = _num(kw.get("mean", pos[0] if pos else "0"), "normal mean")
        sd = _num(kw.get("sd", pos[1] if len(pos) > 1 else "1"), "normal sd")
        return Normal(mean, sd)
    if name == "empirical":
        if not pos:
            raise ParseError("empirical marginal needs a csv path and column name")
        path = pos[0]
        column = pos[1] if len(pos) > 1 else kw.get("column", "x1")
        values = _read_column(path, column)
        return Empirical(tuple(values))
    raise ParseError(f"unknown marginal {name!r}; use uniform, normal or empirical")


def parse_kernel(token: str, marginal=None):
    """Kernel spec strings such as 'gaussian:0.5' or 'sobolev:r=2'.

    Supported: linear, gaussian:<sigma>, dirac:<levels>, sobolev:r=<r>,
    stein:<sigma|linear>, durrande:<base>=<sigma> (needs a marginal),
    dist-embed:inner=<sigma>,lam=<l>[,sigma2=<s>], w2-embed:lam=<l>,
    gak:bandwidth=<b>[,band=<w>].
    """
    name, _, body = token.partition(":")
    pos, kw = _spec_args(body)
    name = name.strip().lower()
    if name == "linear":
        return Linear()
    if name == "gaussian":
        sigma = kw.get("sigma", pos[0] if pos else None)
        if sigma is None:
            raise ParseError("gaussian kernel needs a bandwidth, e.g. gaussian:0.5")
        return Gaussian(_num(sigma, "gaussian sigma"))
    if name == "dirac":
        levels = kw.get("levels", pos[0] if pos else None)
        if levels is None:
            raise ParseError("dirac kernel needs the level count, e.g. dirac:3")
        return Dirac(int(_num(levels, "dirac levels")))
    if name == "sobolev":
        r = kw.get("r", pos[0] if pos else "1")
        return SobolevZeroMean(int(_num(r, "sobolev order")))
    if name == "stein":
        base = kw.get("base", pos[0] if pos else "1.0")
        if base == "linear":
            return SteinZeroMean(Linear())
        return SteinZeroMean(Gaussian(_num(base, "stein base sigma")))
    if name == "durrande":
        if marginal is None:
            raise ParseError("durrande kernel needs --marginal for the projection")
        if "linear" in kw or (pos and pos[0] == "linear"):
            return DurrandeZeroMean(Linear(), marginal)
        sigma = kw.get("gaussian", kw.get("sigma", pos[0] if pos else None))
        if sigma is None:
            raise ParseError("durrande kernel needs a base, e.g. durrande:gaussian=0.5")
        return DurrandeZeroMean(Gaussian(_num(sigma, "durrande base sigma")), marginal)
    if name == "dist-embed":
        inner = _num(kw.get("inner", pos[0] if pos else "1.0"), "inner sigma")
        lam = _num(kw.get("lam", "1.0"), "lam")
        sigma2 = _num(kw.get("sigma2", "1.0"), "sigma2")
        return DistributionEmbedding(sigma2=sigma2, lam=lam, inner=Gaussian(inner))
    if name == "w2-embed":
        lam = _num(kw.get("lam", pos[0] if pos else "1.0"), "lam")
        sigma2 = _num(kw.get("sigma2", "1.0"), "sigma2")
        return WassersteinEmbedding(sigma2=sigma2, lam=lam)
    if name == "gak":
        bw = kw.get("bandwidth", pos[0] if pos else None)
        if bw is None:
            raise ParseError("gak kernel needs a bandwidth, e.g. gak:bandwidth=0.05")
        band = kw.get("band")
        return GlobalAlignment(
            bandwidth=_num(bw, "gak bandwidth"),
            band=int(_num(band, "gak band")) if band is not None else None,
        )
    raise ParseError(f"unknown kernel {name!r}")


# --------------------------------------------------------------------------
# CSV ingestion and export
# --------------------------------------------------------------------------


def _read_column(path: str, column: str) -> list[float]:
    sample = ingest_csv(path, output=column, output_kind="scalar", inputs=[])
    return [float(v) for v in np.asarray(sample.y, dtype=float)]


def _cell_float(cell: str, column: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r} in column {column}", line=line)


def ingest_csv(
    path, output: str = "y", output_kind: str = "scalar", inputs: list[str] | None = None
) -> SampleSet:
    """Typed sample from a headed CSV file.

    output_kind selects how the output is read: 'scalar' (one float
    column), 'categorical' (integer levels), 'dist' (semicolon-separated
    draws in one cell), or 'curve' (a block of columns named
    <output>_t<time>).  Leading lines starting with '#' are skipped.
    """
    output_kind = output_kind.lower()
    if output_kind not in ("scalar", "categorical", "dist", "curve"):
        raise ParseError(f"unknown output kind {output_kind!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        raw_rows = []
        for row in reader:
            if not row or (header is None and row[0].lstrip().startswith("#")):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            raw_rows.append((reader.line_num, row))
    if header is None:
        raise ParseError("no header row found", line=1)
    if output_kind == "curve":
        prefix = output + "_t"
        out_cols = [c for c in header if c.startswith(prefix)]
        if not out_cols:
            raise ParseError(f"no columns named {prefix}* in header")
        try:
            times = sorted((float(c[len(prefix):]), c) for c in out_cols)
        except ValueError:
            raise ParseError(f"curve column suffixes after {prefix} must be numeric")
        out_cols = [c for _, c in times]
        time_grid = np.array([t for t, _ in times])
    else:
        if output not in header:
            raise ParseError(f"declared output column {output!r} not in header")
        out_cols = [output]
        time_grid = None
    if inputs is None:
        input_names = [c for c in header if c not in out_cols]
    else:
        input_names = list(inputs)
        for name in input_names:
            if name not in header:
                raise ParseError(f"declared input column {name!r} not in header")
    col_idx = {c: i for i, c in enumerate(header)}
    xs = []
    ys = []
    for line, row in raw_rows:
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} cells per row, got {len(row)}", line=line
            )
        xs.append([_cell_float(row[col_idx[c]], c, line) for c in input_names])
        if output_kind == "scalar":
            ys.append(_cell_float(row[col_idx[output]], output, line))
        elif output_kind == "categorical":
            v = _cell_float(row[col_idx[output]], output, line)
            if not float(v).is_integer():
                raise ParseError(f"categorical cell {v!r} is not an integer", line=line)
            ys.append(int(v))
        elif output_kind == "dist":
            cell = row[col_idx[output]]
            parts = [p for p in cell.split(";") if p != ""]
            if not parts:
                raise ParseError(f"empty sample cell in column {output}", line=line)
            ys.append(DistSample(np.array([_cell_float(p, output, line) for p in parts])))
        else:
            vals = np.array([_cell_float(row[col_idx[c]], c, line) for c in out_cols])
            ys.append(Curve(time_grid, vals))
    if not xs:
        raise ParseError("no data rows", line=2)
    x = np.asarray(xs, dtype=float) if input_names else np.zeros((len(ys), 0))
    if output_kind == "scalar":
        y = np.asarray(ys, dtype=float)
    elif output_kind == "categorical":
        k = max(ys) + 1
        y = [Categorical(v, k) for v in ys]
    else:
        y = ys
    if input_names:
        return SampleSet(x=x, y=y, input_names=tuple(input_names))
    return SampleSet(x=np.zeros((len(ys), 1)), y=y, input_names=("x1",))


def export_sample_csv(sample: SampleSet, path, output: str = "y"):
    """Inverse of ingest_csv; floats keep full round-trip precision."""
    kind = "Scalar" if isinstance(sample.y, np.ndarray) else column_kind(sample.y)
    header = list(sample.input_names)
    if kind == "Curve":
        grid = sample.y[0].times
        header += [f"{output}_t{repr(float(t))}" for t in grid]
    else:
        header.append(output)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(sample.n):
            row = [repr(float(v)) for v in sample.x[i]]
            if kind == "Scalar":
                row.append(repr(float(sample.y[i])))
            elif kind == "Categorical":
                row.append(str(sample.y[i].level))
            elif kind == "DistSample":
                row.append(";".join(repr(float(v)) for v in sample.y[i].values))
            else:
                row += [repr(float(v)) for v in sample.y[i].values]
            writer.writerow(row)


# --------------------------------------------------------------------------
# Kernel resolution against a concrete sample
# --------------------------------------------------------------------------


def resolve_output_kernel(token: str, y) -> tuple:
    """(spec, gram) for the output column; 'auto' picks by output kind."""
    if token != "auto":
        spec = parse_kernel(token)
        return spec, kernels.gram(spec, y)
    kind = "Scalar" if isinstance(y, np.ndarray) else column_kind(y)
    if kind == "Scalar":
        spec = Gaussian(kernels.median_heuristic(np.asarray(y, dtype=float)))
    elif kind == "Categorical":
        spec = Dirac(y[0].num_levels)
    elif kind == "DistSample":
        return calibrate_distribution_embedding(y)
    else:
        pooled = np.concatenate([c.values for c in y])
        spec = GlobalAlignment(bandwidth=kernels.median_heuristic(pooled))
    return spec, kernels.gram(spec, y)


def resolve_input_spec(token: str, sample: SampleSet, data_route: bool):
    """Product of zero-mean factor kernels for HSIC-style estimators.

    'auto' uses the rank-1 Sobolev kernel when inputs live in the unit
    cube, otherwise (given data of unknown law) projects a Gaussian base
    to zero mean under each empirical marginal.
    """
    if token == "auto":
        in_unit = np.all(sample.x >= -1e-9) and np.all(sample.x <= 1.0 + 1e-9)
        if in_unit and not data_route:
            return sobolev_product(sample.d)
        factors = []
        for l in range(sample.d):
            col = sample.x[:, l]
            marg = Empirical(tuple(float(v) for v in col))
            factors.append(DurrandeZeroMean(Gaussian(kernels.median_heuristic(col)), marg))
        return kernels.ProductZeroMean(tuple(factors))
    spec = parse_kernel(token)
    return kernels.ProductZeroMean(tuple(spec for _ in range(sample.d)))


def _maybe_unit_inputs(x: np.ndarray, sampler) -> np.ndarray:
    """Rescale to the unit cube when every marginal is uniform."""
    margs = getattr(sampler, "marginals", None)
    if margs and all(isinstance(m, Uniform) for m in margs):
        lows = [m.low for m in margs]
        highs = [m.high for m in margs]
        return unit_rescale(x, lows, highs)
    return x


# --------------------------------------------------------------------------
# Subcommand handlers
# --------------------------------------------------------------------------


def _load_source(args):
    """Either a registered model or an ingested dataset."""
    if bool(args.model) == bool(args.data):
        raise DomainError("pass exactly one of --model or --data")
    if args.model:
        return testbed.get_model(args.model), None
    inputs = args.inputs.split(",") if args.inputs else None
    return None, ingest_csv(args.data, output=args.output, output_kind=args.output_kind, inputs=inputs)


def _draw_sample(reg, n: int, rng) -> SampleSet:
    x = reg.sampler.sample(n, rng)
    y = reg.model(x, rng)
    if isinstance(y, np.ndarray):
        y = np.asarray(y, dtype=float)
    return SampleSet(x=x, y=y, input_names=reg.input_names)


def run_estimate(args) -> int:
    reg, data = _load_source(args)
    cfg = EstimatorConfig(n=args.n, m=args.m, n_A=args.na, n_I=args.ni, seed=args.seed)
    config = _config_dict(args, "estimate")
    rows = []
    for rep in range(args.reps):
        rows.append(_estimate_once(args, reg, data, cfg, rep))
    bundle = ResultBundle(
        name="estimate",
        config=config,
        seed=args.seed,
        replicates=rows,
        summary=summarize(rows),
        eval_counts={"model": int(reg.model.eval_count) if reg else 0,
                     "data_rows": 0 if reg else data.n},
    )
    out = Path(args.out)
    write_rows_csv(out / "estimate_indices.csv", rows, bundle.config_hash, args.force)
    bundle.files.append(str(out / "estimate_indices.csv"))
    path = bundle.save(out, args.force)
    print(f"wrote {path}")
    return 0


def _estimate_once(args, reg, data, cfg: EstimatorConfig, rep: int) -> dict:
    est = args.estimator
    row = {"rep": rep}
    if est == "pick-freeze":
        if reg is None:
            raise DomainError("pick-freeze needs --model (it chooses the design points)")
        design = pick_freeze_design(
            reg.sampler, cfg.n, substream(cfg.seed, "cli-pf", rep), seed=(cfg.seed << 20) ^ rep
        )
        y = design.outputs(reg.model, "y")
        yp = design.outputs(reg.model, "y_prime")
        spec, _ = resolve_output_kernel(args.kernel_out, y)
        for l in range(reg.model.d):
            yt = design.outputs(reg.model, l)
            m_l, m_ml, m = mmd_from_columns(spec, y, yp, yt)
            row[f"S_{l + 1}"] = m_l / m
            row[f"ST_{l + 1}"] = 1.0 - m_ml / m
        return row
    if est == "double-loop":
        if reg is None:
            raise DomainError("double-loop needs --model (it draws conditional samples)")
        rng = substream(cfg.seed, "cli-dl-total", rep)
        x = reg.sampler.sample(max(cfg.n, 200), rng)
        y = reg.model(x, rng)
        spec, gram_matrix = resolve_output_kernel(args.kernel_out, y)
        total = kernels.mmd_total(spec, y, gram_matrix)
        rep_cfg = EstimatorConfig(n=cfg.n, m=cfg.m, n_A=cfg.n_A, n_I=cfg.n_I,
                                  seed=(cfg.seed << 20) ^ rep)
        for l in range(reg.model.d):
            row[f"S_{l + 1}"] = double_loop_mmd(reg.model, reg.sampler, (l,), spec, rep_cfg) / total
        return row
    if reg is not None:
        sample = _draw_sample(reg, cfg.n, substream(cfg.seed, "cli-sample", rep))
        sample = SampleSet(
            x=_maybe_unit_inputs(sample.x, reg.sampler), y=sample.y, input_names=sample.input_names
        )
    else:
        sample = data
    spec, gram_matrix = resolve_output_kernel(args.kernel_out, sample.y)
    if est == "rank":
        total = kernels.mmd_total(spec, sample.y, gram_matrix)
        for l in range(sample.d):
            row[f"S_{l + 1}"] = rank_mmd(sample, l, spec, gram_matrix=gram_matrix) / total
        return row
    if est == "knn":
        from .estimators import knn_closed_value

        total = kernels.mmd_total(spec, sample.y, gram_matrix)
        rep_cfg = EstimatorConfig(n=cfg.n, m=cfg.m, n_A=cfg.n_A, n_I=cfg.n_I,
                                  seed=(cfg.seed << 20) ^ rep)
        for l in range(sample.d):
            row[f"S_{l + 1}"] = knn_closed_value(sample, (l,), spec, rep_cfg, gram_matrix=gram_matrix) / total
        return row
    if est in ("hsic-u", "hsic-v"):
        flavor = est[-1]
        in_spec = resolve_input_spec(args.kernel_in, sample, data_route=reg is None)
        ws = hsic_workspace(sample, in_spec, spec, output_gram=gram_matrix)
        full = tuple(range(sample.d))
        total = hsic_stat(sample, full, in_spec, spec, flavor=flavor, workspace=ws)
        for l in range(sample.d):
            row[f"S_{l + 1}"] = hsic_stat(sample, (l,), in_spec, spec, flavor=flavor, workspace=ws) / total
        return row
    raise DomainError(f"unknown estimator {est!r}")


def run_shapley(args) -> int:
    from .shapley import hsic_shapley, mmd_shapley

    reg, data = _load_source(args)
    cfg = EstimatorConfig(n=args.n, m=args.m, n_A=args.na, n_I=args.ni, seed=args.seed)
    config = _config_dict(args, "shapley")
    rows = []
    reports = []
    for rep in range(args.reps):
        if reg is not None:
            sample = _draw_sample(reg, cfg.n, substream(cfg.seed, "cli-shapley", rep))
            sample = SampleSet(
                x=_maybe_unit_inputs(sample.x, reg.sampler), y=sample.y,
                input_names=sample.input_names,
            )
        else:
            sample = data
        spec, gram_matrix = resolve_output_kernel(args.kernel_out, sample.y)
        rep_cfg = EstimatorConfig(n=cfg.n, m=cfg.m, n_A=cfg.n_A, n_I=cfg.n_I,
                                  seed=(cfg.seed << 20) ^ rep)
        if args.flavor == "mmd":
            report = mmd_shapley(sample, spec, rep_cfg, route=args.route,
                                 num_perms=args.perms, gram_matrix=gram_matrix)
        else:
            in_spec = resolve_input_spec(args.kernel_in, sample, data_route=reg is None)
            ws = hsic_workspace(sample, in_spec, spec, output_gram=gram_matrix)
            report = hsic_shapley(sample, in_spec, spec, rep_cfg,
                                  num_perms=args.perms, workspace=ws)
        row = {"rep": rep}
        for l in range(sample.d):
            row[f"Sh_{l + 1}"] = float(report.effects[l])
        rows.append(row)
        reports.append(report.to_dict())
    bundle = ResultBundle(
        name="shapley",
        config=config,
        seed=args.seed,
        replicates=reports,
        summary=summarize(rows),
        eval_counts={"model": int(reg.model.eval_count) if reg else 0,
                     "data_rows": 0 if reg else data.n},
    )
    out = Path(args.out)
    write_rows_csv(out / "shapley_effects.csv", rows, bundle.config_hash, args.force)
    bundle.files.append(str(out / "shapley_effects.csv"))
    path = bundle.save(out, args.force)
    print(f"wrote {path}")
    return 0


def run_reproduce(args) -> int:
    driver = REPRODUCERS[args.experiment]
    kwargs = {"reps": args.reps, "seed": args.seed, "force": args.force}
    if args.n is not None:
        kwargs["n"] = args.n
    bundle = driver(args.out, **kwargs)
    path = bundle.save(Path(args.out), args.force)
    print(f"wrote {path}")
    for f in bundle.files:
        print(f"wrote {f}")
    return 0


def run_verify_kernels(args) -> int:
    marg = parse_marginal(args.marginal)
    spec = parse_kernel(args.kernel, marginal=marg)
    worst = kernels.verify_zero_mean(
        spec, marg, mc_n=args.mc, rng=substream(args.seed, "verify-kernels")
    )
    print(f"max |mean embedding| over probes: {worst:.4e} (tolerance {args.tol:g})")
    if worst < args.tol:
        print("zero-mean check passed")
        return 0
    raise AssumptionViolatedError(
        f"{args.kernel} is not zero-mean under {args.marginal} at tolerance {args.tol:g}"
    )


# --------------------------------------------------------------------------
# Parser assembly
# --------------------------------------------------------------------------


def _config_dict(args, command: str) -> dict:
    keep = (
        "model", "data", "estimator", "flavor", "route", "perms", "kernel_in",
        "kernel_out", "n", "m", "na", "ni", "reps", "seed", "output", "output_kind",
        "inputs", "experiment",
    )
    out = {"command": command}
    for k in keep:
        if hasattr(args, k):
            out[k] = getattr(args, k)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, model_data: bool = True):
    if model_data:
        p.add_argument("--model", help="registered test model name")
        p.add_argument("--data", help="CSV file with inputs and output")
        p.add_argument("--output", default="y", help="output column name")
        p.add_argument("--output-kind", default="scalar",
                       choices=["scalar", "categorical", "dist", "curve"])
        p.add_argument("--inputs", help="comma-separated input column names")
        p.add_argument("--kernel-out", default="auto", help="output kernel spec")
        p.add_argument("--kernel-in", default="auto", help="input factor kernel spec")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--na", type=int, default=None, help="anchor count for knn estimators")
    p.add_argument("--ni", type=int, default=10, help="neighbourhood size for knn estimators")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="kgsa-out", help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite mismatched results")
    p.add_argument("--config", help="JSON file with defaults for these flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="kgsa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser._kgsa_subparsers = {}

    p_est = sub.add_parser("estimate", help="sensitivity indices from a model or data")
    _add_common(p_est)
    p_est.add_argument("--estimator", default="rank", choices=list(ESTIMATORS))
    p_est.set_defaults(handler=run_estimate)
    parser._kgsa_subparsers["estimate"] = p_est

    p_sh = sub.add_parser("shapley", help="Shapley effects from a model or data")
    _add_common(p_sh)
    p_sh.add_argument("--flavor", default="mmd", choices=["mmd", "hsic"])
    p_sh.add_argument("--route", default="complementary", choices=["complementary", "closed"])
    p_sh.add_argument("--perms", type=int, default=None,
                      help="permutation count (default: exact for d <= 14)")
    p_sh.set_defaults(handler=run_shapley)
    parser._kgsa_subparsers["shapley"] = p_sh

    p_rep = sub.add_parser("reproduce", help="replicated benchmark studies")
    p_rep.add_argument("experiment", choices=sorted(REPRODUCERS))
    p_rep.add_argument("--n", type=int, default=None)
    p_rep.add_argument("--reps", type=int, default=50)
    p_rep.add_argument("--seed", type=int, default=7)
    p_rep.add_argument("--out", default="kgsa-out")
    p_rep.add_argument("--force", action="store_true")
    p_rep.add_argument("--config", help="JSON file with defaults for these flags")
    p_rep.set_defaults(handler=run_reproduce)
    parser._kgsa_subparsers["reproduce"] = p_rep

    p_ver = sub.add_parser("verify-kernels", help="zero-mean property check")
    p_ver.add_argument("--kernel", required=True)
    p_ver.add_argument("--marginal", required=True)
    p_ver.add_argument("--tol", type=float, default=5e-3)
    p_ver.add_argument("--mc", type=int, default=100_000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--config", help="JSON file with defaults for these flags")
    p_ver.set_defaults(handler=run_verify_kernels)
    parser._kgsa_subparsers["verify-kernels"] = p_ver
    return parser


def _apply_config_file(parser: _Parser, ns, argv):
    path = getattr(ns, "config", None)
    if not path:
        return ns
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read config file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ParseError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ParseError(f"config file {path} must hold a JSON object")
    sub = parser._kgsa_subparsers[ns.command]
    valid = {a.dest for a in sub._actions}
    mapped = {}
    for k, v in data.items():
        dest = k.replace("-", "_")
        if dest not in valid:
            raise ParseError(f"config file key {k!r} is not a flag of {ns.command}")
        mapped[dest] = v
    sub.set_defaults(**mapped)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        ns = _apply_config_file(parser, ns, argv)
        return ns.handler(ns)
    except SystemExit as e:
        return int(e.code or 0)
    except (DegenerateKernelError, DegenerateOutputError) as e:
        print(f"kgsa: degenerate: {e}", file=sys.stderr)
        return 2
    except AssumptionViolatedError as e:
        print(f"kgsa: assumption violated: {e}", file=sys.stderr)
        return 3
    except KgsaError as e:
        print(f"kgsa: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"kgsa: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
