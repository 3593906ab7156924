"""Benchmark harness: multi-seed trials over variants and parameter sweeps.

An experiment is described by a flat key=value config file (``#`` comments,
numbered ``row.``/``variant.`` blocks, optional ``sweep.`` block). Every seed
of a problem row generates one instance that is reused bit-identically across
all variants and sweep values, so comparisons are paired. Aggregates are
arithmetic means over seeds with medians and standard deviations appended for
ordering checks.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .problem import GeneratorSpec, generate, with_beta
from .solver import SolverConfig, solve

SWEEP_AXES = ("beta", "kappa", "zeta_delta", "k_bar")

# Pinned column prefix; extension columns follow it.
CSV_COLUMNS = (
    "n", "m", "s", "p", "beta", "sweep_value", "variant",
    "iter_mean", "time_total", "time_algo", "time_factor", "time_eig", "time_qn",
    "conv_rate", "obj_mean", "kkt_mean",
)
CSV_EXTENSION_COLUMNS = ("iter_median", "iter_std", "obj_std", "kkt_std")
TIMING_COLUMNS = ("time_total", "time_algo", "time_factor", "time_eig", "time_qn")


@dataclass(frozen=True)
class ProblemRow:
    """One problem line of a results table: generator shape plus beta."""

    n: int
    m: int
    s: float
    p: float
    beta: float
    noise_var: float = 1e-3
    tau_factor: float = 0.1


@dataclass(frozen=True)
class VariantSpec:
    """A solver column: variant name, display label, and parameter overrides."""

    name: str
    label: str
    params: tuple = ()

    def config(self, beta: float, **overrides) -> SolverConfig:
        kwargs = dict(self.params)
        kwargs.update(overrides)
        return SolverConfig(variant=self.name, beta=beta, **kwargs)


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")


@dataclass
class ExperimentSpec:
    rows: list
    seeds: list
    variants: list
    sweep: Sweep | None = None
    output: str = "results.csv"
    diagnostics: bool = False

    def __post_init__(self):
        if not self.rows:
            raise ValueError("experiment needs at least one problem row")
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")
        if not self.variants:
            raise ValueError("experiment needs at least one variant")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ValueError(f"variant labels must be distinct, got {labels}")


@dataclass(frozen=True)
class ResultRow:
    n: int
    m: int
    s: float
    p: float
    beta: float
    sweep_value: str
    variant: str
    iter_mean: float
    time_total: float
    time_algo: float
    time_factor: float
    time_eig: float
    time_qn: float
    conv_rate: float
    obj_mean: float
    kkt_mean: float
    iter_median: float
    iter_std: float
    obj_std: float
    kkt_std: float


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    variant_labels: list = field(default_factory=list)


def sweep_applies(axis: str, variant_name: str) -> bool:
    """Whether a sweep axis parameterizes the given variant."""
    if axis == "beta":
        return True
    if axis == "kappa":
        return variant_name != "opt"
    if axis == "zeta_delta":
        return variant_name == "bfgs_r"
    if axis == "k_bar":
        return variant_name in ("bfgs", "lbfgs", "lbfgs_r")
    raise ValueError(f"unknown sweep axis {axis!r}")


def format_sweep_value(axis: str, value) -> str:
    if axis == "zeta_delta":
        zeta, delta = value
        return f"{zeta!r}:{delta!r}"
    if axis == "k_bar":
        return str(int(value))
    return repr(float(value))


def _apply_sweep(axis: str, value, variant: VariantSpec, beta: float):
    """Return (beta, config overrides) for one sweep cell."""
    if axis == "beta":
        return float(value), {}
    if axis == "kappa":
        key = {"spro": "kappa1", "ipro": "kappa2"}.get(variant.name, "kappa3")
        return beta, {key: float(value)}
    if axis == "zeta_delta":
        zeta, delta = value
        return beta, {"zeta": float(zeta), "delta": float(delta)}
    if axis == "k_bar":
        return beta, {"k_bar": int(value)}
    raise ValueError(f"unknown sweep axis {axis!r}")


def _aggregate(row: ProblemRow, beta: float, sweep_value: str, label: str, runs) -> ResultRow:
    iters = [float(rep.iterations) for rep in runs]
    objs = [rep.objective for rep in runs]
    kkts = [rep.kkt_final for rep in runs]
    mean = statistics.fmean
    return ResultRow(
        n=row.n, m=row.m, s=row.s, p=row.p, beta=beta,
        sweep_value=sweep_value, variant=label,
        iter_mean=mean(iters),
        time_total=mean([rep.time_total for rep in runs]),
        time_algo=mean([rep.time_algo for rep in runs]),
        time_factor=mean([rep.time_factor for rep in runs]),
        time_eig=mean([rep.time_eig for rep in runs]),
        time_qn=mean([rep.time_qn for rep in runs]),
        conv_rate=mean([1.0 if rep.converged else 0.0 for rep in runs]),
        obj_mean=mean(objs),
        kkt_mean=mean(kkts),
        iter_median=float(statistics.median(iters)),
        iter_std=float(statistics.pstdev(iters)),
        obj_std=float(statistics.pstdev(objs)),
        kkt_std=float(statistics.pstdev(kkts)),
    )


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Execute the full grid; deterministic row order regardless of timing.

    A solve that raises aborts the whole row with context; non-convergence is
    only reflected in ``conv_rate``.
    """
    table = ResultTable(variant_labels=[v.label for v in spec.variants])
    for row in spec.rows:
        instances = []
        for seed in spec.seeds:
            gen_spec = GeneratorSpec(
                n=row.n, m=row.m, sparsity_s=row.s, density_p=row.p,
                noise_var=row.noise_var, tau_factor=row.tau_factor, seed=seed,
            )
            prob, _ = generate(gen_spec, beta=row.beta)
            instances.append(prob)

        sweep_cells = [(None, None)] if spec.sweep is None else [
            (spec.sweep.axis, value) for value in spec.sweep.values
        ]
        done = set()
        for axis, value in sweep_cells:
            for variant in spec.variants:
                if axis is None or not sweep_applies(axis, variant.name):
                    sweep_str = "-"
                    beta, overrides = row.beta, {}
                else:
                    sweep_str = format_sweep_value(axis, value)
                    beta, overrides = _apply_sweep(axis, value, variant, row.beta)
                key = (row, sweep_str, variant.label)
                if key in done:
                    continue
                done.add(key)
                runs = []
                for seed, prob in zip(spec.seeds, instances):
                    solve_prob = prob if beta == row.beta else with_beta(prob, beta)
                    try:
                        config = variant.config(beta, **overrides)
                        _, report = solve(solve_prob, config)
                    except Exception as exc:
                        raise RuntimeError(
                            f"solve failed for row {row}, variant {variant.label!r}, "
                            f"sweep {sweep_str!r}, seed {seed}: {exc}"
                        ) from exc
                    runs.append(report)
                table.rows.append(_aggregate(row, beta, sweep_str, variant.label, runs))
    return table


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def emit_table(table: ResultTable, path, fmt: str = "csv") -> None:
    """Write the table as CSV (fixed column order) or pivoted markdown."""
    path = Path(path)
    if fmt == "csv":
        columns = CSV_COLUMNS + CSV_EXTENSION_COLUMNS
        lines = [",".join(columns)]
        for row in table.rows:
            lines.append(",".join(_format_cell(getattr(row, col)) for col in columns))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "markdown":
        path.write_text(render_markdown(table))
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'markdown'")


_MD_METRICS = (("Iter.", "iter_mean"), ("Time", "time_total"), ("T-A", "time_algo"), ("KKT", "kkt_mean"))


def render_markdown(table: ResultTable) -> str:
    """Variants as column groups of (Iter., Time, T-A, KKT); one line per problem/sweep."""
    labels = table.variant_labels
    by_key: dict = {}
    order: list = []
    fallback: dict = {}
    for row in table.rows:
        problem_key = (row.n, row.m, row.s, row.p, row.beta)
        if row.sweep_value == "-":
            fallback[(problem_key, row.variant)] = row
        key = (problem_key, row.sweep_value)
        if key not in by_key:
            by_key[key] = {"cells": {}}
            order.append(key)
        by_key[key]["cells"][row.variant] = row

    # Under a sweep, '-' lines only hold sweep-agnostic variants; fold them
    # into each sweep line instead of printing them on their own.
    sweep_keys = [key for key in order if key[1] != "-"]
    if sweep_keys:
        order = sweep_keys

    header = ["problem"]
    for label in labels:
        header.extend(f"{label} {metric}" for metric, _ in _MD_METRICS)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for key in order:
        problem_key, sweep_value = key
        n, m, s, p, beta = problem_key
        cells = [f"n={n} m={m} s={s} p={p} beta={_format_cell(beta)} sweep={sweep_value}"]
        for label in labels:
            row = by_key[key]["cells"].get(label) or fallback.get((problem_key, label))
            if row is None:
                cells.extend("-" for _ in _MD_METRICS)
            else:
                cells.extend(_format_cell(getattr(row, attr)) for _, attr in _MD_METRICS)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def read_table(path) -> ResultTable:
    """Parse a CSV written by :func:`emit_table` back into a ResultTable."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    expected = list(CSV_COLUMNS + CSV_EXTENSION_COLUMNS)
    if header != expected:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    labels: list = []
    for line in lines[1:]:
        values = line.split(",")
        record = dict(zip(header, values))
        row = ResultRow(
            n=int(record["n"]), m=int(record["m"]),
            s=float(record["s"]), p=float(record["p"]), beta=float(record["beta"]),
            sweep_value=record["sweep_value"], variant=record["variant"],
            **{key: float(record[key]) for key in expected[7:]},
        )
        rows.append(row)
        if row.variant not in labels:
            labels.append(row.variant)
    return ResultTable(rows=rows, variant_labels=labels)


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines with ``#`` comments into a dict."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        values[key] = value
    return values


def _numbered_blocks(values: dict, prefix: str) -> list:
    """Collect ``prefix.K.field`` keys into a list of dicts ordered by K."""
    blocks: dict = {}
    for key, value in values.items():
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == prefix:
            try:
                index = int(parts[1])
            except ValueError as exc:
                raise ValueError(f"bad block index in {key!r}") from exc
            blocks.setdefault(index, {})[parts[2]] = value
    return [blocks[index] for index in sorted(blocks)]


def _parse_float(value: str) -> float:
    return float(value)


def _parse_k_bar(value: str) -> float:
    return float("inf") if value.lower() in ("inf", "infinity") else int(value)


_VARIANT_PARSERS = {
    "kappa1": _parse_float, "kappa2": _parse_float, "kappa3": _parse_float,
    "h": int, "k_bar": _parse_k_bar, "zeta": _parse_float, "delta": _parse_float,
    "alpha": _parse_float, "eps_abs": _parse_float, "eps_rel": _parse_float,
    "max_iter": int,
}


def experiment_from_config(text: str) -> ExperimentSpec:
    """Build an ExperimentSpec from config text (see module docstring)."""
    values = parse_config(text)

    row_blocks = _numbered_blocks(values, "row")
    if not row_blocks:
        row_blocks = [{key: values[key] for key in ("n", "m", "s", "p", "beta") if key in values}]
    rows = []
    for block in row_blocks:
        missing = [key for key in ("n", "m", "s", "p", "beta") if key not in block]
        if missing:
            raise ValueError(f"problem row missing keys {missing}")
        rows.append(ProblemRow(
            n=int(block["n"]), m=int(block["m"]),
            s=float(block["s"]), p=float(block["p"]), beta=float(block["beta"]),
            noise_var=float(block.get("noise_var", 1e-3)),
            tau_factor=float(block.get("tau_factor", 0.1)),
        ))

    seeds = [int(part) for part in values["seeds"].split(",")] if "seeds" in values else list(range(10))

    variants = []
    for block in _numbered_blocks(values, "variant"):
        if "name" not in block:
            raise ValueError(f"variant block missing 'name': {block}")
        name = block["name"]
        params = tuple(
            (key, _VARIANT_PARSERS[key](value))
            for key, value in block.items()
            if key in _VARIANT_PARSERS
        )
        unknown = [key for key in block if key not in _VARIANT_PARSERS and key not in ("name", "label")]
        if unknown:
            raise ValueError(f"unknown variant keys {unknown}")
        variants.append(VariantSpec(name=name, label=block.get("label", name), params=params))

    sweep = None
    if "sweep.axis" in values:
        axis = values["sweep.axis"]
        raw_values = [part.strip() for part in values.get("sweep.values", "").split(",") if part.strip()]
        if axis == "zeta_delta":
            parsed = tuple(tuple(float(x) for x in part.split(":")) for part in raw_values)
        elif axis == "k_bar":
            parsed = tuple(int(part) for part in raw_values)
        else:
            parsed = tuple(float(part) for part in raw_values)
        sweep = Sweep(axis=axis, values=parsed)

    diagnostics = values.get("diagnostics", "false").lower() in ("1", "true", "yes")
    return ExperimentSpec(
        rows=rows,
        seeds=seeds,
        variants=variants,
        sweep=sweep,
        output=values.get("output", "results.csv"),
        diagnostics=diagnostics,
    )


def load_experiment(path) -> ExperimentSpec:
    return experiment_from_config(Path(path).read_text())
