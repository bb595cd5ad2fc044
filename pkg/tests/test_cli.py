import csv

import pytest

from halocondense.cli import main, run_ablation, run_sweep
from halocondense.config import dump_config, load_config, parse_config, ExperimentConfig
from halocondense.errors import ConfigError

MINIMAL = """\
# tiny SBM run
sbm_nodes = 60
sbm_classes = 3
sbm_p_in = 0.2
sbm_p_out = 0.02
feature_dim = 4
hidden = 6
workers = 3
epochs = 3
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(MINIMAL)
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(phi="attention", r=0.3, feedback=False, sweep_ratios=("none", 0.2, 0.5))
        again = parse_config(dump_config(cfg))
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config("wokers = 3\n")
        assert info.value.field == "wokers"

    @pytest.mark.parametrize("text,field", [("r = 1.5", "r"), ("phi = none\nr = 0.5", "r"),
                                            ("phi = median", "phi"), ("epochs = many", "epochs"),
                                            ("momentum = 1.0", "momentum")])
    def test_invalid_values_name_field(self, text, field):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == field

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")


class TestMain:
    def test_run_writes_reports(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
        rows = read_rows(out / "metrics.csv")
        assert len(rows) == 3
        assert (out / "report.json").exists()
        assert load_config(out / "config.txt") == load_config(config_file)

    def test_run_twice_identical_csv(self, config_file, tmp_path):
        for name in ("a", "b"):
            assert main(["run", "--config", str(config_file), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_seed_and_mode_override(self, config_file, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--config", str(config_file), "--out", str(out), "--seed", "4", "--mode", "concurrent"]) == 0
        cfg = load_config(out / "config.txt")
        assert cfg.seed == 4 and cfg.mode == "concurrent"

    def test_bad_ratio_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(MINIMAL + "r = 1.5\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "r:" in capsys.readouterr().err

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "files.cfg"
        path.write_text(f"graph = files\nedges_path = {tmp_path}/e\nfeatures_path = {tmp_path}/f\n"
                        f"labels_path = {tmp_path}/l\n")
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "x")]) == 3

    def test_validate_config(self, config_file, capsys):
        assert main(["validate-config", "--config", str(config_file)]) == 0
        assert parse_config(capsys.readouterr().out) == load_config(config_file)

    def test_gen_data_round_trip(self, config_file, tmp_path):
        data = tmp_path / "data"
        assert main(["gen-data", "--config", str(config_file), "--out", str(data)]) == 0
        files_cfg = tmp_path / "files.cfg"
        files_cfg.write_text(f"graph = files\nedges_path = {data}/edges.txt\nfeatures_path = {data}/features.txt\n"
                             f"labels_path = {data}/labels.txt\nmasks_path = {data}/masks.txt\n"
                             "hidden = 6\nworkers = 3\nepochs = 3\n")
        assert main(["run", "--config", str(files_cfg), "--out", str(tmp_path / "f")]) == 0
        assert main(["run", "--config", str(config_file), "--out", str(tmp_path / "s")]) == 0
        a = read_rows(tmp_path / "f" / "metrics.csv")
        b = read_rows(tmp_path / "s" / "metrics.csv")
        assert [r["loss"] for r in a] == [r["loss"] for r in b]

    def test_sweep_and_ablate_commands(self, config_file, tmp_path):
        assert main(["sweep", "--config", str(config_file), "--out", str(tmp_path / "sw")]) == 0
        assert len(read_rows(tmp_path / "sw" / "sweep.csv")) == 6
        assert main(["ablate", "--config", str(config_file), "--out", str(tmp_path / "ab")]) == 0
        assert len(read_rows(tmp_path / "ab" / "ablation.csv")) == 8


class TestSweep:
    def test_baseline_and_half(self, config_file, tmp_path):
        rows = run_sweep(load_config(config_file), tmp_path, ["none", 0.5])
        assert [r["phi"] for r in rows] == ["none", "mean"]
        assert rows[0]["bytes_ratio"] == 1.0
        assert rows[1]["bytes_ratio"] == pytest.approx(0.5, abs=0.05)

    def test_singleton_sweep_equals_single_run(self, config_file, tmp_path):
        cfg = load_config(config_file)
        run_sweep(cfg, tmp_path / "sw", [0.5])
        assert main(["run", "--config", str(config_file), "--out", str(tmp_path / "one")]) == 0
        assert (tmp_path / "sw" / "r_0.5" / "metrics.csv").read_bytes() == (tmp_path / "one" / "metrics.csv").read_bytes()

    def test_empty(self, config_file, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(load_config(config_file), tmp_path, [])


class TestAblation:
    def test_matrix(self, config_file, tmp_path):
        rows = run_ablation(load_config(config_file).replace(attn_init=0.0, aux_lr=0.0), tmp_path)
        table = {(r["feedback"], r["phi"]): r for r in rows}
        assert len(table) == 8
        # the uncompressed path ignores the feedback flag
        assert table[(True, "none")]["final_test_acc"] == table[(False, "none")]["final_test_acc"]
        assert (tmp_path / "none_ef" / "metrics.csv").read_bytes() == (tmp_path / "none_noef" / "metrics.csv").read_bytes()
        # a frozen zero attention vector is the plain mean
        assert (tmp_path / "attention_ef" / "metrics.csv").read_bytes() == (tmp_path / "mean_ef" / "metrics.csv").read_bytes()
