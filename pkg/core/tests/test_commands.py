from io import StringIO

import numpy as np
import pandas as pd
import pytest
from django.apps import apps
from django.core.management import call_command
from django.core.management.base import CommandError

from core import cli
from core.services.interpolation_service import DEMO_SETTINGS, InterpolationService
from core.services.io_service import IOService
from core.services.product_service import ProductService


def run(*args):
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def without_timestamp(text):
    return [line for line in text.splitlines() if not line.lstrip("#% ").startswith("generated ")]


@pytest.fixture
def triangle_path(write_document):
    return write_document({"top_simplices": [[0, 1, 2], [2, 3]], "label": "tri"})


@pytest.fixture
def demo_files(tmp_path):
    """The demo scene written out as a complex document, an observations CSV and a ground-truth flow."""
    scene = InterpolationService.demo_scene()
    edges = scene.complex_.simplices(1)

    complex_path = tmp_path / "demo.json"
    IOService.write_json(complex_path, IOService.complex_to_document(scene.complex_))

    obs_path = tmp_path / "obs.csv"
    rows = [(t, *edges[e], value) for t, e, value in scene.observation.entries]
    IOService.write_csv(obs_path, pd.DataFrame(rows, columns=["t", "edge_u", "edge_v", "value"]), ["observed"])

    truth_path = tmp_path / "truth.csv"
    IOService.write_flow(truth_path, scene.truth, ["truth"])
    return str(complex_path), str(obs_path), str(truth_path)


class TestComplexCommand:
    def test_build_summary(self, triangle_path):
        assert run("complex", "build", "--input", triangle_path, "--summary").splitlines() == [
            "dim,count",
            "0,4",
            "1,4",
            "2,1",
        ]

    def test_build_writes_the_normalized_document(self, tmp_path, triangle_path):
        out = tmp_path / "normalized.json"
        assert run("complex", "build", "--input", triangle_path, "--out", str(out)) == ""
        assert IOService.complex_to_document(IOService.load_single_complex(out))["top_simplices"] == [
            [0, 1, 2],
            [2, 3],
        ]

    def test_boundary(self, tmp_path, triangle_path):
        out = tmp_path / "b1.mtx"
        assert run("complex", "boundary", "--input", triangle_path, "--dim", "1", "--out", str(out)).strip() == (
            "tri[0](4) x tri[1](4) nnz=8"
        )
        matrix = IOService.read_matrix_market(out).toarray()
        np.testing.assert_array_equal(matrix.sum(axis=0), [0, 0, 0, 0])
        assert "prodtop 0.1.0 complex boundary" in out.read_text()

    def test_validate_only(self, triangle_path):
        assert run("complex", "build", "--input", triangle_path, "--validate").strip() == "ok"

    def test_invalid_document(self, write_document):
        path = write_document({"top_simplices": [[0, 0.5]]})
        with pytest.raises(CommandError) as error:
            run("complex", "build", "--input", path)
        assert error.value.returncode == 1


class TestProductCommand:
    def test_emit_matches_the_service(self, tmp_path, write_document):
        x = write_document({"top_simplices": [[0, 1]]}, name="x.json")
        y = write_document({"top_simplices": [[0, 1], [1, 2]]}, name="y.json")
        out = tmp_path / "l.mtx"

        run("product", "--x", x, "--y", y, "--grade", "1,0", "--alpha-y", "0.5", "--emit", str(out))

        product = ProductService.product_complex(IOService.load_single_complex(x), IOService.load_single_complex(y))
        expected = ProductService.product_hodge_laplacian(product, 1, 0, alpha_x=1.0, alpha_y=0.5).to_dense()
        np.testing.assert_allclose(IOService.read_matrix_market(out).toarray(), expected)

    def test_boundary_blocks(self, write_document):
        x = write_document({"top_simplices": [[0, 1]]}, name="x.json")
        y = write_document({"top_simplices": [[0, 1]]}, name="y.json")
        output = run("product", "--x", x, "--y", y, "--grade", "1,1", "--operator", "boundary-temporal")
        assert output.strip().endswith("nnz=2")

    def test_bad_grade(self, write_document):
        x = write_document({"top_simplices": [[0, 1]]})
        with pytest.raises(CommandError, match="grade"):
            run("product", "--x", x, "--y", x, "--grade", "1,-1")


class TestSpectralCommand:
    def test_single_complex_with_hodge_dimensions(self, triangle_path):
        output = run("spectral", "--complex", triangle_path, "--grade", "1", "--hodge")
        lines = output.splitlines()
        assert lines[:3] == ["gradient,curl,harmonic", "3,1,0", "index,lambda_x,lambda_y,lambda_sum"]

        frame = pd.read_csv(StringIO("\n".join(lines[2:])))
        assert list(frame["index"]) == [0, 1, 2, 3]
        np.testing.assert_allclose(frame["lambda_y"], 0.0, atol=1e-12)
        np.testing.assert_allclose(frame["lambda_sum"], frame["lambda_x"], atol=1e-12)
        assert frame["lambda_sum"].is_monotonic_increasing

    def test_modes_and_out(self, tmp_path, triangle_path):
        out = tmp_path / "modes.csv"
        run("spectral", "--complex", triangle_path, "--grade", "0", "--modes", "2", "--out", str(out))
        text = out.read_text()
        assert text.startswith("# prodtop 0.1.0 spectral\n")
        frame = pd.read_csv(out, comment="#")
        assert len(frame) == 2
        assert frame["lambda_sum"][0] == pytest.approx(0.0, abs=1e-10)

    def test_too_many_modes(self, triangle_path):
        with pytest.raises(CommandError, match="modes"):
            run("spectral", "--complex", triangle_path, "--grade", "2", "--modes", "2")

    def test_hodge_needs_a_single_complex(self, write_document):
        path = write_document({"product": {"x": {"top_simplices": [[0, 1]]}, "y": {"top_simplices": [[0, 1]]}}})
        with pytest.raises(CommandError, match="single complex"):
            run("spectral", "--complex", path, "--grade", "1,0", "--hodge")


class TestInterpolateCommand:
    def test_recovers_the_demo_flow(self, tmp_path, demo_files):
        complex_path, obs_path, truth_path = demo_files
        alpha_t, alpha_s = DEMO_SETTINGS[0]
        out = tmp_path / "flow.csv"

        output = run(
            "interpolate",
            "--complex", complex_path,
            "--obs", obs_path,
            "--alpha-s", repr(alpha_s),
            "--alpha-t", repr(alpha_t),
            "--lambda", "1e-6",
            "--steps", "3",
            "--truth", truth_path,
            "--out", str(out),
        )  # fmt: skip

        lines = dict(line.split(",") for line in output.splitlines())
        assert float(lines["objective"]) >= 0.0
        assert float(lines["rel_error"]) < 0.15
        flow = IOService.read_flow(out, IOService.load_simplicial_complex(complex_path), 3)
        assert flow.values.shape == (3, 10)

    def test_rejects_non_positive_lambda(self, tmp_path, demo_files):
        complex_path, obs_path, _ = demo_files
        with pytest.raises(CommandError, match="lambda"):
            run(
                "interpolate",
                "--complex", complex_path,
                "--obs", obs_path,
                "--alpha-s", "1",
                "--alpha-t", "1",
                "--lambda", "0",
                "--out", str(tmp_path / "flow.csv"),
            )  # fmt: skip


class TestDemoCommand:
    def test_demo_table(self, tmp_path):
        out = tmp_path / "demo.csv"
        lines = run("demo", "fig1", "--out", str(out)).splitlines()
        assert lines[0] == "alpha_t,alpha_s,rel_error"
        assert len(lines) == 4
        errors = [float(line.split(",")[2]) for line in lines[1:]]
        assert errors[0] < min(errors[1:])
        assert len(pd.read_csv(out, comment="#")) == 3


class TestDrifterCommand:
    def test_synth(self, tmp_path):
        out = tmp_path / "pings.csv"
        lines = run("drifter", "synth", "--count", "4", "--years", "2", "--days", "10", "--out", str(out)).splitlines()
        assert lines[1] == "--bbox 3,0,0,2.5 --hex-size 0.3"
        frame = pd.read_csv(out, comment="#")
        assert list(frame.columns) == ["id", "timestamp", "lat", "lon"]
        assert lines[0] == f"{frame['id'].nunique()} trajectories"

    def test_run_sweep_with_components(self, tmp_path, unit_grid_trajectories):
        pings = tmp_path / "pings.csv"
        IOService.write_pings(pings, unit_grid_trajectories, ["handmade"])
        results = tmp_path / "results.csv"
        components = tmp_path / "components.csv"

        output = run(
            "drifter", "run",
            "--pings", str(pings),
            "--bbox", "1,0,0,1",
            "--hex-size", "0.3",
            "--split", "0.5",
            "--alpha-s", "0,1",
            "--alpha-t", "0,1",
            "--max-iter", "200",
            "--seed", "3",
            "--components", str(components),
            "--out", str(results),
        )  # fmt: skip

        lines = output.splitlines()
        assert lines[0] == "setting,alpha_s,alpha_t,train_loss,test_loss"
        assert [line.split(",")[0] for line in lines[1:5]] == ["none", "temporal", "spatial", "joint"]
        assert lines[5].startswith("components of ")

        frame = pd.read_csv(results, comment="#")
        assert list(frame.columns) == ["alpha_s", "alpha_t", "train_loss", "test_loss", "iters"]
        assert len(frame) == 4
        parts = pd.read_csv(components, comment="#")
        assert sorted(parts["year"].unique()) == [2000, 2001]

    def test_bad_bbox(self, tmp_path):
        pings = tmp_path / "pings.csv"
        pings.write_text("id,timestamp,lat,lon\n")
        with pytest.raises(CommandError) as error:
            run("drifter", "run", "--pings", str(pings), "--bbox", "0,0,1,1", "--out", str(tmp_path / "r.csv"))
        assert error.value.returncode == 1


class TestReproducibility:
    """Two runs with the same inputs write the same bytes apart from the timestamp line."""

    def test_boundary_of_an_unlabeled_document(self, tmp_path, write_document):
        path = write_document({"top_simplices": [[0, 1, 2], [2, 3]]}, name="tail.json")
        outputs = []
        for run_id in range(2):
            out = tmp_path / f"b1-{run_id}.mtx"
            stdout = run("complex", "boundary", "--input", path, "--dim", "1", "--out", str(out))
            outputs.append((stdout, without_timestamp(out.read_text())))

        assert outputs[0] == outputs[1]
        assert outputs[0][0].strip() == "tail[0](4) x tail[1](4) nnz=8"

    def test_normalized_document_of_an_unlabeled_complex(self, tmp_path, write_document):
        path = write_document({"top_simplices": [[0, 1], [1, 2]]}, name="path.json")
        first, second = tmp_path / "first.json", tmp_path / "second.json"
        run("complex", "build", "--input", path, "--out", str(first))
        run("complex", "build", "--input", path, "--out", str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_product_emit(self, tmp_path, write_document):
        x = write_document({"top_simplices": [[0, 1, 2]]}, name="x.json")
        y = write_document({"top_simplices": [[0, 1], [1, 2]]}, name="y.json")
        outputs = []
        for run_id in range(2):
            out = tmp_path / f"l-{run_id}.mtx"
            run("product", "--x", x, "--y", y, "--grade", "1,1", "--alpha-y", "0.5", "--emit", str(out))
            outputs.append(without_timestamp(out.read_text()))
        assert outputs[0] == outputs[1]

    def test_interpolated_flow_csv(self, tmp_path, demo_files):
        complex_path, obs_path, _ = demo_files
        outputs = []
        for run_id in range(2):
            out = tmp_path / f"flow-{run_id}.csv"
            run(
                "interpolate",
                "--complex", complex_path,
                "--obs", obs_path,
                "--alpha-s", "1",
                "--alpha-t", "0.01",
                "--lambda", "1e-6",
                "--steps", "3",
                "--out", str(out),
            )  # fmt: skip
            outputs.append(out.read_text())

        assert without_timestamp(outputs[0]) == without_timestamp(outputs[1])
        assert sum(line.startswith("# generated ") for line in outputs[0].splitlines()) == 1

    def test_synthetic_pings_csv(self, tmp_path):
        outputs = []
        for run_id in range(2):
            out = tmp_path / f"pings-{run_id}.csv"
            run("drifter", "synth", "--count", "5", "--years", "2", "--days", "15", "--out", str(out))
            outputs.append(without_timestamp(out.read_text()))
        assert outputs[0] == outputs[1]


class TestMain:
    def test_no_arguments_is_a_usage_error(self, capsys):
        assert cli.main([]) == 2
        assert "usage: prodtop <command>" in capsys.readouterr().err

    def test_help_and_version(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "drifter" in capsys.readouterr().out
        assert cli.main(["--version"]) == 0
        assert capsys.readouterr().out.strip() == "prodtop 0.1.0"

    def test_unknown_command(self, capsys):
        assert cli.main(["migrate"]) == 2
        assert "unknown command 'migrate'" in capsys.readouterr().err

    def test_argparse_errors_exit_with_two(self, capsys):
        assert cli.main(["spectral", "--grade", "1"]) == 2
        assert cli.main(["complex"]) == 2

    def test_invalid_option_values_exit_with_one(self, capsys, tmp_path, triangle_path):
        assert cli.main(["complex", "build", "--input", str(tmp_path / "missing.json")]) == 1
        assert "No such file" in capsys.readouterr().err

        code = cli.main(["spectral", "--complex", triangle_path, "--grade", "a,b"])
        assert code == 1
        assert "CommandError" in capsys.readouterr().err

    def test_success(self, capsys, triangle_path):
        assert cli.main(["complex", "build", "--input", triangle_path]) == 0
        assert capsys.readouterr().out.startswith("dim,count")

    def test_runs_without_contrib_apps(self, capsys, triangle_path):
        assert not apps.is_installed("django.contrib.auth")
        assert not apps.is_installed("django.contrib.contenttypes")
        assert cli.main(["complex", "build", "--input", triangle_path, "--validate"]) == 0
        assert capsys.readouterr().out.strip() == "ok"
