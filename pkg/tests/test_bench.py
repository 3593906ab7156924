import pytest

import qnadmm.bench as bench
from qnadmm.bench import (
    CSV_COLUMNS,
    CSV_EXTENSION_COLUMNS,
    TIMING_COLUMNS,
    ExperimentSpec,
    ProblemRow,
    Sweep,
    VariantSpec,
    emit_table,
    experiment_from_config,
    parse_config,
    read_table,
    render_markdown,
    run_experiment,
    sweep_applies,
)

TINY_CFG = """
# tiny experiment
row.1.n = 30
row.1.m = 20
row.1.s = 0.2
row.1.p = 0.5
row.1.beta = 5
seeds = 0,1
variant.1.name = opt
variant.2.name = lbfgs
variant.2.kappa3 = 1.01
output = tiny.csv
"""


def tiny_spec(**overrides):
    spec = experiment_from_config(TINY_CFG)
    for key, value in overrides.items():
        setattr(spec, key, value)
    return spec


class TestConfigParsing:
    def test_key_value_and_comments(self):
        values = parse_config("a = 1  # trailing\n# full line\n\nb=two\n")
        assert values == {"a": "1", "b": "two"}

    def test_malformed_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config("not a pair\n")

    def test_experiment_fields(self):
        spec = experiment_from_config(TINY_CFG)
        assert spec.rows == [ProblemRow(n=30, m=20, s=0.2, p=0.5, beta=5.0)]
        assert spec.seeds == [0, 1]
        assert [v.name for v in spec.variants] == ["opt", "lbfgs"]
        assert spec.output == "tiny.csv"
        assert spec.sweep is None

    def test_default_seeds(self):
        text = TINY_CFG.replace("seeds = 0,1\n", "")
        assert experiment_from_config(text).seeds == list(range(10))

    def test_sweep_parsing(self):
        text = TINY_CFG + "sweep.axis = kappa\nsweep.values = 1.01, 5\n"
        spec = experiment_from_config(text)
        assert spec.sweep == Sweep(axis="kappa", values=(1.01, 5.0))

    def test_zeta_delta_pairs(self):
        text = TINY_CFG + "sweep.axis = zeta_delta\nsweep.values = 0.1:100, 0.99:1e-5\n"
        spec = experiment_from_config(text)
        assert spec.sweep.values == ((0.1, 100.0), (0.99, 1e-5))

    def test_unknown_variant_key(self):
        with pytest.raises(ValueError, match="unknown variant keys"):
            experiment_from_config(TINY_CFG + "variant.1.bogus = 3\n")

    def test_missing_row_keys(self):
        with pytest.raises(ValueError, match="missing keys"):
            experiment_from_config("row.1.n = 10\nvariant.1.name = opt\n")

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            ExperimentSpec(
                rows=[ProblemRow(10, 5, 0.5, 0.5, 1.0)],
                seeds=[0],
                variants=[VariantSpec("opt", "x"), VariantSpec("lbfgs", "x")],
            )


class TestSweepApplies:
    def test_axes(self):
        assert sweep_applies("beta", "opt")
        assert not sweep_applies("kappa", "opt")
        assert sweep_applies("kappa", "ipro")
        assert sweep_applies("zeta_delta", "bfgs_r")
        assert not sweep_applies("zeta_delta", "lbfgs")
        assert sweep_applies("k_bar", "lbfgs_r")
        assert not sweep_applies("k_bar", "opt")


class TestRunExperiment:
    def test_degenerate_single_cell(self):
        spec = tiny_spec(seeds=[3], variants=[VariantSpec("opt", "opt")])
        table = run_experiment(spec)
        assert len(table.rows) == 1
        row = table.rows[0]
        assert row.variant == "opt" and row.sweep_value == "-" and row.conv_rate == 1.0

    def test_instances_generated_once_per_row_seed(self, monkeypatch):
        calls = []
        original = bench.generate

        def counting(spec, beta=1.0):
            calls.append((spec.seed, beta))
            return original(spec, beta)

        monkeypatch.setattr(bench, "generate", counting)
        spec = tiny_spec()
        run_experiment(spec)
        assert len(calls) == len(spec.rows) * len(spec.seeds)

    def test_full_grid_present(self):
        spec = tiny_spec()
        spec.sweep = Sweep(axis="beta", values=(5.0, 8.0))
        table = run_experiment(spec)
        keys = {(row.sweep_value, row.variant) for row in table.rows}
        assert keys == {(repr(5.0), "opt"), (repr(5.0), "lbfgs"), (repr(8.0), "opt"), (repr(8.0), "lbfgs")}

    def test_inapplicable_sweep_runs_once(self):
        spec = tiny_spec()
        spec.sweep = Sweep(axis="kappa", values=(1.01, 5.0))
        table = run_experiment(spec)
        opt_rows = [row for row in table.rows if row.variant == "opt"]
        assert len(opt_rows) == 1 and opt_rows[0].sweep_value == "-"
        lbfgs_rows = [row for row in table.rows if row.variant == "lbfgs"]
        assert [row.sweep_value for row in lbfgs_rows] == [repr(1.01), repr(5.0)]

    def test_solver_error_aborts_with_context(self):
        spec = tiny_spec(variants=[VariantSpec("bfgs_r", "bad")])  # missing zeta/delta
        with pytest.raises(RuntimeError, match="solve failed for row"):
            run_experiment(spec)


class TestEmit:
    def test_csv_header_prefix_pinned(self, tmp_path):
        table = run_experiment(tiny_spec())
        path = tmp_path / "out.csv"
        emit_table(table, path)
        header = path.read_text().splitlines()[0].split(",")
        assert tuple(header[: len(CSV_COLUMNS)]) == CSV_COLUMNS
        assert tuple(header[len(CSV_COLUMNS):]) == CSV_EXTENSION_COLUMNS

    def test_empty_sweep_emits_dash(self, tmp_path):
        table = run_experiment(tiny_spec())
        path = tmp_path / "out.csv"
        emit_table(table, path)
        line = path.read_text().splitlines()[1].split(",")
        assert line[CSV_COLUMNS.index("sweep_value")] == "-"

    def test_round_trip(self, tmp_path):
        table = run_experiment(tiny_spec())
        path = tmp_path / "out.csv"
        emit_table(table, path)
        again = read_table(path)
        assert again.rows == table.rows

    def test_markdown_shape(self, tmp_path):
        # 3 (problem, sweep) combos x 4 variants -> 3 data lines, 1 + 4k header cells.
        rows = [ProblemRow(n=30, m=20, s=0.2, p=0.5, beta=b) for b in (2.0, 5.0, 9.0)]
        variants = [VariantSpec("opt", "opt"), VariantSpec("spro", "spro"),
                    VariantSpec("ipro", "ipro"), VariantSpec("lbfgs", "lbfgs")]
        spec = ExperimentSpec(rows=rows, seeds=[0], variants=variants)
        table = run_experiment(spec)
        text = render_markdown(table)
        lines = text.strip().splitlines()
        header_cells = [cell for cell in lines[0].split("|") if cell.strip()]
        assert len(header_cells) == 1 + 4 * len(variants)
        assert len(lines) - 2 == 3  # minus header and rule

    def test_markdown_folds_sweep_agnostic_variants(self):
        spec = tiny_spec()
        spec.sweep = Sweep(axis="kappa", values=(1.01, 5.0))
        table = run_experiment(spec)
        lines = render_markdown(table).strip().splitlines()
        assert len(lines) - 2 == 2  # one line per kappa value
        assert all("sweep=-" not in line for line in lines[2:])

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError, match="unknown format"):
            emit_table(run_experiment(tiny_spec(seeds=[0], variants=[VariantSpec("opt", "opt")])), tmp_path / "x", fmt="yaml")


class TestFullScaleTable:
    @pytest.mark.slow
    def test_table1_row1_shape_and_means(self):
        # Reference iteration means for (n=2000, m=1000, s=0.1, p=0.1, beta=100):
        # 20.5 / 64.3 / 54.3 / 38.4 for opt / spro / ipro / bfgs.
        expected = {"opt": 20.5, "spro": 64.3, "ipro": 54.3, "bfgs": 38.4}
        spec = ExperimentSpec(
            rows=[ProblemRow(n=2000, m=1000, s=0.1, p=0.1, beta=100.0)],
            seeds=list(range(10)),
            variants=[VariantSpec(name, name) for name in expected],
        )
        table = run_experiment(spec)
        assert [row.variant for row in table.rows] == list(expected)
        means = {row.variant: row.iter_mean for row in table.rows}
        assert all(row.conv_rate == 1.0 for row in table.rows)
        for variant, value in expected.items():
            assert abs(means[variant] - value) <= 0.2 * value, means
        assert means["opt"] < means["bfgs"] < means["ipro"] < means["spro"]


class TestDeterminism:
    def strip_timing(self, text: str) -> list:
        lines = [line.split(",") for line in text.splitlines()]
        header = lines[0]
        keep = [i for i, name in enumerate(header) if name not in TIMING_COLUMNS]
        return [[row[i] for i in keep] for row in lines]

    def test_repeated_runs_identical_outside_timing(self, tmp_path):
        spec = tiny_spec()
        emit_table(run_experiment(spec), tmp_path / "a.csv")
        emit_table(run_experiment(spec), tmp_path / "b.csv")
        a = self.strip_timing((tmp_path / "a.csv").read_text())
        b = self.strip_timing((tmp_path / "b.csv").read_text())
        assert a == b
