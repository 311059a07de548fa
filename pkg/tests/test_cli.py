import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from polarity import cli
from polarity.descriptor import from_descriptor, load, save
from polarity.funcspace import GridFunction, PowerOfPNorm, Scale, sample

SQ = PowerOfPNorm(2, 2, 1)


@pytest.fixture
def inputs(tmp_path):
    paths = {}
    for name, f, grid in [
        ("xsq", SQ, ([(-3.0, 3.0)], (257,))),
        ("half", Scale(0.5, SQ), None),
        ("norm", PowerOfPNorm(2, 1, 1), None),
        ("quarter", Scale(0.25, SQ), ([(-3.0, 3.0)], (257,))),
    ]:
        paths[name] = tmp_path / f"{name}.json"
        save(f, paths[name], grid=grid)
    bumpy = GridFunction([(-2.0, 2.0)], (9,), np.array([3, 1, 2.5, 0.5, 0, 0.2, 1.5, 0.9, 4.0]))
    paths["bumpy"] = tmp_path / "bumpy.json"
    save(bumpy, paths["bumpy"])
    return paths


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith(cli.ENV_PREFIX):
            monkeypatch.delenv(key)


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestTransform:
    def test_polar_of_square(self, inputs, tmp_path):
        out = tmp_path / "p.json"
        assert run("transform", "--op", "polar", "--in", inputs["xsq"], "--dual-box=-2,2",
                   "--dual-shape", 41, "--out", out) == 0
        d = load(out)
        g = from_descriptor(d)
        ys = g.axes[0]
        seen = np.abs(ys) >= 0.7
        assert np.abs(g.values - ys ** 2 / 4)[seen].max() < 1e-6
        assert len(d["argmax"]) == 41 and 0 < d["boundary_fraction"] < 1
        diag = json.loads((tmp_path / "p.json.diag.json").read_text())
        assert diag["op"] == "polar" and "elapsed_s" in diag

    def test_csv_output(self, inputs, tmp_path):
        out = tmp_path / "p.csv"
        assert run("transform", "--op", "legendre", "--in", inputs["xsq"], "--format", "csv",
                   "--dual-box=-2,2", "--dual-shape", 5, "--out", out) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["x1", "u"] and len(rows) == 6
        assert float(rows[-1][1]) == pytest.approx(1.0, abs=1e-3)  # unrefined discrete sup

    def test_envelope_is_idempotent(self, inputs, tmp_path):
        once, twice = tmp_path / "e1.json", tmp_path / "e2.json"
        assert run("transform", "--op", "envelope", "--in", inputs["bumpy"], "--out", once) == 0
        assert run("transform", "--op", "envelope", "--in", once, "--out", twice) == 0
        assert load(once)["values"] == load(twice)["values"]

    def test_no_timestamp_is_deterministic(self, inputs, tmp_path):
        texts = []
        for k in range(2):
            out = tmp_path / f"d{k}.json"
            assert run("transform", "--op", "polar", "--in", inputs["xsq"], "--no-timestamp", "--out", out) == 0
            texts.append((out.read_bytes(), (tmp_path / f"d{k}.json.diag.json").read_bytes()))
        assert texts[0] == texts[1]
        assert b"elapsed" not in texts[0][1]

    def test_strict_truncation_is_refused(self, inputs, tmp_path):
        code = run("transform", "--op", "polar", "--in", inputs["norm"], "--box=-2,2", "--shape", 41,
                   "--dual-box=-3,3", "--dual-shape", 31, "--strict", "--out", tmp_path / "x.json")
        assert code == cli.EXIT_REFUSED
        assert not (tmp_path / "x.json").exists()


class TestUsage:
    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        ["transform", "--op", "polar"],
        ["transform", "--op", "nope", "--in", "x.json"],
        ["hj", "--f", "a.json", "--g", "b.json", "--out", "o", "--steps", "1"],
    ])
    def test_exit_one(self, argv, capsys):
        assert run(*argv) == cli.EXIT_USAGE

    def test_unreadable_input(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run("transform", "--op", "polar", "--in", bad) == cli.EXIT_USAGE

    def test_bad_environment_value(self, inputs, monkeypatch):
        monkeypatch.setenv("POLARITY_STEPS", "many")
        assert run("hj", "--f", inputs["xsq"], "--g", inputs["half"], "--out", "o") == cli.EXIT_USAGE

    def test_ginf_needs_two_inputs(self, inputs):
        assert run("ginf", "--in", inputs["xsq"]) == cli.EXIT_USAGE


class TestSettings:
    def _args(self, *argv):
        return cli.build_parser().parse_args([str(a) for a in argv])

    def test_defaults(self):
        s = cli.resolve_settings(self._args("info", "--in", "x"), {})
        assert s["format"] == "json" and s["steps"] == 21 and s["refine"] is True

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"format": "csv", "steps": 5, "t_end": 2.0}))
        args = self._args("hj", "--f", "a", "--g", "b", "--out", "o", "--config", cfg, "--steps", 9)
        s = cli.resolve_settings(args, {"POLARITY_STEPS": "7", "POLARITY_T_END": "3.0"})
        # flag beats env beats config
        assert s["steps"] == 9 and s["t_end"] == 3.0 and s["format"] == "csv"

    def test_config_from_environment(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"policy": "waive"}))
        s = cli.resolve_settings(self._args("info", "--in", "x"), {"POLARITY_CONFIG": str(cfg)})
        assert s["policy"] == "waive"

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        with pytest.raises(cli.UsageError):
            cli.resolve_settings(self._args("info", "--in", "x", "--config", cfg), {})

    def test_single_axis_broadcasts(self):
        s = cli.resolve_settings(self._args("transform", "--op", "polar", "--in", "x", "--box=-1,1", "--shape", "5,7"), {})
        assert s["box"] == [(-1.0, 1.0)] * 2 and s["shape"] == (5, 7)

    def test_dual_box_needs_a_shape(self):
        with pytest.raises(cli.UsageError):
            cli.resolve_settings(self._args("transform", "--op", "polar", "--in", "x", "--dual-box=-1,1"), {})


class TestSolvers:
    def test_hj_writes_frames_csv_and_manifest(self, inputs, tmp_path):
        out = tmp_path / "hj"
        assert run("hj", "--f", inputs["xsq"], "--g", inputs["half"], "--steps", 21,
                   "--check", "--no-timestamp", "--out", out) == 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["schema"] == 1 and m["times"][:3] == [0.0, 0.05, 0.1] and len(m["frames"]) == 21
        # the three-frame time difference is O(dt^2)
        assert "timestamp" not in m and m["max_residual"] < 0.02
        frame = load(out / m["frames"][10])
        g = from_descriptor(frame)
        xs = g.axes[0]
        inner = (np.abs(xs) >= 0.2) & (np.abs(xs) <= 1.5)
        assert frame["t"] == 0.5
        assert np.abs(g.values - xs ** 2 / 2)[inner].max() < 1e-3
        rows = list(csv.reader((out / "path.csv").open()))
        assert rows[0] == m["csv_columns"] == ["t", "x1", "u"]
        assert len(rows) == 1 + 21 * 257

    def test_manifest_is_written_last(self, inputs, tmp_path, monkeypatch):
        order = []
        real = cli.atomic_write

        def spy(path, text):
            order.append(os.path.basename(str(path)))
            real(path, text)

        monkeypatch.setattr(cli, "atomic_write", spy)
        assert run("interpolate", "--u0", inputs["xsq"], "--u1", inputs["quarter"], "--steps", 3,
                   "--check", "--out", tmp_path / "ma") == 0
        assert order[-1] == "manifest.json"
        assert set(order[:-1]) == {"frame_0000.json", "frame_0001.json", "frame_0002.json", "path.csv", "residuals.csv"}

    def test_interpolate_closed_form(self, inputs, tmp_path):
        out = tmp_path / "ma"
        assert run("interpolate", "--u0", inputs["xsq"], "--u1", inputs["quarter"], "--steps", 3,
                   "--out", out) == 0
        g = from_descriptor(load(out / "frame_0001.json"))
        xs = g.axes[0]
        inner = (np.abs(xs) >= 0.2) & (np.abs(xs) <= 1.5)
        # P(x^2) = y^2/4 and P(x^2/4) = y^2, so the midpoint has dual 5y^2/8
        assert np.abs(g.values - 0.4 * xs ** 2)[inner].max() < 2e-3

    def test_cauchy_blow_up_exits_two(self, inputs, tmp_path):
        out = tmp_path / "c"
        code = run("cauchy", "--u0", inputs["xsq"], "--du0", inputs["xsq"], "--t-end", 2.0, "--steps", 21,
                   "--out", out)
        assert code == cli.EXIT_REFUSED
        m = json.loads((out / "manifest.json").read_text())
        assert "refused" in m and m["T_est"] < 1.0
        assert len(m["frames"]) == len(m["times"])

    def test_cauchy_within_the_lifespan(self, inputs, tmp_path):
        out = tmp_path / "c"
        assert run("cauchy", "--u0", inputs["xsq"], "--du0", inputs["quarter"], "--t-end", 2.0,
                   "--steps", 5, "--check", "--out", out) == 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["T_est"] == 2.0 and m["initial_velocity"]["max_deviation"] < 5e-3

    def test_ginf_closed_form_and_grid(self, inputs, tmp_path):
        out = tmp_path / "h.json"
        assert run("ginf", "--in", inputs["half"], "--in", inputs["half"], "--out", out) == 0
        h = from_descriptor(load(out))
        assert h.evaluate([1.2]) == pytest.approx(0.36)
        wit = tmp_path / "w.csv"
        assert run("ginf", "--in", inputs["xsq"], "--in", inputs["xsq"], "--route", "direct",
                   "--witness", wit, "--out", out) == 0
        rows = list(csv.reader(wit.open()))
        assert rows[0] == ["x", "y", "z"] and len(rows) == 258


class TestVerifyAndInfo:
    def test_involution_passes(self, inputs, tmp_path):
        out = tmp_path / "r.json"
        assert run("verify", "--suite", "involution", "--in", inputs["xsq"], "--out", out) == 0
        rows = json.loads(out.read_text())
        assert rows and all(r["passed"] for r in rows)

    def test_hessian_on_a_norm_fails(self, inputs, capsys):
        assert run("verify", "--suite", "hessian", "--in", inputs["norm"]) == cli.EXIT_FAILED
        assert "FAIL" in capsys.readouterr().err

    def test_catalog_and_inputs_are_exclusive(self, inputs):
        assert run("verify", "--suite", "hessian", "--catalog", "builtin", "--in", inputs["xsq"]) == cli.EXIT_USAGE

    def test_info(self, inputs, capsys):
        assert run("info", "--in", inputs["xsq"]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["kind"] == "analytic" and info["classification"]["in_S2"]


def test_module_entry_point(inputs):
    proc = subprocess.run([sys.executable, "-m", "polarity", "info", "--in", str(inputs["norm"])],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["classification"]["nonlinear_at_infinity"] is False
