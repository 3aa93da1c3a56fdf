import numpy as np
import pytest

from stagns.cli import main, study_flags, STUDY_HEADER
from stagns.io import ConfigError, parse_config_text, vtk_text
from stagns.mesh import BUILTIN_MESHES, refine_uniform, write_smesh


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_vtk_scalars(path, name, n):
    lines = path.read_text().splitlines()
    start = lines.index(f"SCALARS {name} double 1") + 2
    return np.array([float(x) for x in lines[start:start + n]])


def test_solve_zero_forcing(tmp_path, capsys):
    cfg = write_config(tmp_path, "mesh = builtin:criss_cross_square\nrefine = 1\n"
                       "csv = out.csv\nvtk = out.vtk\nreport = report.csv\n")
    assert main(["solve", "--config", cfg]) == 0
    vtk = tmp_path / "out.vtk"
    text = vtk.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text and "CELL_DATA 16" in text
    assert np.all(read_vtk_scalars(vtk, "rho", 16) == 1.0)
    lines = text.splitlines()
    k = lines.index("VECTORS velocity double")
    assert all(l == "0.0 0.0 0.0" for l in lines[k + 1:k + 17])
    summary = (tmp_path / "out.csv").read_text().splitlines()
    assert summary[0].startswith("cells,h,converged")
    assert (tmp_path / "report.csv").read_text().startswith("name,status,value,bound,tol\n")


def test_solve_bubble_two_triangle(tmp_path):
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nforcing = stream_bubble\n"
                       "report = report.csv\n")
    assert main(["solve", "--config", cfg]) == 0
    rows = (tmp_path / "report.csv").read_text().splitlines()[1:]
    assert not any(",fail," in r for r in rows)


def test_exponent_gate(tmp_path, capsys):
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nxi1 = 1\n")
    assert main(["solve", "--config", cfg]) == 2
    assert "condition (i)" in capsys.readouterr().err
    assert main(["solve", "--config", cfg, "--force"]) == 1


def test_outputs_are_reproducible(tmp_path):
    text = ("mesh = builtin:two_triangle_square\nrefine = 2\nforcing = stream_trig\n"
            "csv = out.csv\nvtk = out.vtk\nreport = report.csv\n")
    cfg = write_config(tmp_path, text)
    outputs = []
    for _ in range(2):
        assert main(["solve", "--config", cfg]) == 0
        outputs.append([(tmp_path / f).read_bytes() for f in ("out.csv", "out.vtk", "report.csv")])
    assert outputs[0] == outputs[1]


def test_continuation_failure_exit_code(tmp_path):
    mesh = refine_uniform(refine_uniform(BUILTIN_MESHES["two_triangle_square"]()))
    forcing = np.zeros((mesh.n_faces, 2))
    forcing[mesh.interior_faces] = 1e4
    np.savetxt(tmp_path / "f.txt", forcing)
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nrefine = 2\nforcing = file:f.txt\n"
                       "delta_steps = 1\nnewton_max_iter = 2\nmax_bisections = 0\ncsv = out.csv\n")
    assert main(["solve", "--config", cfg]) == 3
    assert (tmp_path / "out.csv").read_text().splitlines()[1].split(",")[2] == "0"


def test_forcing_file_shape_checked(tmp_path):
    np.savetxt(tmp_path / "f.txt", np.zeros((3, 2)))
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nforcing = file:f.txt\n")
    assert main(["solve", "--config", cfg]) == 2


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("viscosity = 2\n", tmp_path)
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("mu = 1\nmu = 2\n", tmp_path)
    with pytest.raises(ConfigError, match="not found"):
        parse_config_text("mesh = nowhere.smesh\n", tmp_path)
    with pytest.raises(ConfigError, match="unknown forcing"):
        parse_config_text("forcing = vortex\n", tmp_path)
    with pytest.raises(ConfigError):
        parse_config_text("gamma = 1.2\n", tmp_path)
    cfg = parse_config_text("# comment\nlambda = 0.5  # bulk\nnewton_tol = 1e-9\nmesh = builtin:kuhn_cube\n",
                            tmp_path)
    assert cfg.params.lam == 0.5 and cfg.solver.newton_tol == 1e-9
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["solve"]) == 2


def test_mesh_files_through_config(tmp_path):
    write_smesh(BUILTIN_MESHES["kuhn_cube"](), tmp_path / "cube.smesh")
    cfg = write_config(tmp_path, "mesh = cube.smesh\ncsv = out.csv\n")
    assert main(["solve", "--config", cfg]) == 0
    (tmp_path / "bad.smesh").write_text("2 3 1\n0 0\n1 0\n2 0\n0 1 2\n")
    cfg = write_config(tmp_path, "mesh = bad.smesh\n", "bad.cfg")
    assert main(["solve", "--config", cfg]) == 2
    assert main(["check", "--config", cfg]) == 2


def test_study_requires_three_levels(tmp_path, capsys):
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nlevels = 2\n")
    assert main(["study", "--config", cfg]) == 2
    assert "study requires >=3 levels" in capsys.readouterr().err


def test_study_zero_forcing(tmp_path):
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nlevels = 3\ncsv = study.csv\n")
    assert main(["study", "--config", cfg]) == 0
    lines = (tmp_path / "study.csv").read_text().splitlines()
    assert lines[0].split(",") == STUDY_HEADER
    for line in lines[1:]:
        values = line.split(",")
        assert float(values[-1]) == 0.0 and float(values[-2]) == 0.0


def test_study_bubble(tmp_path):
    cfg = write_config(tmp_path, "mesh = builtin:two_triangle_square\nrefine = 3\nlevels = 3\n"
                       "forcing = stream_bubble\ncsv = study.csv\n")
    assert main(["study", "--config", cfg]) == 0
    assert len((tmp_path / "study.csv").read_text().splitlines()) == 4


def test_study_flags():
    idx = {n: i for i, n in enumerate(STUDY_HEADER)}

    def row(u, e):
        r = [0.0] * len(STUDY_HEADER)
        r[idx["u_norm"]] = u
        r[idx["err_u"]] = e
        return r
    assert study_flags([row(1.0, 1.0), row(1.09, 0.5), row(1.0, 0.3)]) == (True, True)
    assert study_flags([row(1.0, 1.0), row(1.2, 0.5), row(1.0, 0.3)])[0] is False
    assert study_flags([row(1.0, 1.0), row(1.0, 0.9), row(1.0, 0.3)])[1] is False


def test_check_command(tmp_path):
    cfg = write_config(tmp_path, "report = a.csv\n")
    assert main(["check", "--config", cfg, "--seed", "5"]) == 0
    first = (tmp_path / "a.csv").read_bytes()
    assert main(["check", "--config", cfg, "--seed", "5"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == first
    assert main(["check"]) == 0


def test_vtk_text_layout():
    m = BUILTIN_MESHES["two_tetrahedra"]()
    text = vtk_text(m, {"rho": np.ones(2)}, {"velocity": np.zeros((2, 3))})
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[2] == "ASCII"
    assert "CELLS 2 10" in lines and lines.count("10") == 2
