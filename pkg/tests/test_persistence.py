"""Round-trip and tamper tests for the solution and manifest files."""

import json

import numpy as np
import pytest

from dpgelast.mesh import build_square_mesh, uniform_refine
from dpgelast.exact_solutions import smooth_solution_2d
from dpgelast.forms import bc_from_exact
from dpgelast.dpg_solver import solve_dpg, solve_galerkin_primal
from dpgelast.persistence_formats import (
    FORMAT_VERSION,
    PersistenceError,
    save_solution,
    load_solution,
    sha256_file,
    StudyManifest,
)


@pytest.fixture(scope="module")
def solved():
    smooth = smooth_solution_2d()
    mesh = build_square_mesh(2)
    f = solve_dpg("ultraweak", mesh, smooth.material, 2, bc=bc_from_exact(smooth))
    return mesh, f


class TestSolutionFile:
    def test_round_trip_bit_exact(self, solved, tmp_path):
        mesh, f = solved
        path = tmp_path / "sol.txt"
        save_solution(f, path)
        g = load_solution(path, "ultraweak", mesh)
        assert set(g.coeffs) == set(f.coeffs)
        for name in f.coeffs:
            assert np.array_equal(g.coeffs[name], f.coeffs[name]), name
        # trace slots are persisted alongside the volume fields
        assert "uhat" in g.coeffs and "shat" in g.coeffs

    def test_header_metadata(self, solved, tmp_path):
        mesh, f = solved
        path = tmp_path / "sol.txt"
        save_solution(f, path)
        lines = path.read_text().splitlines()
        assert lines[0] == f"solutionfile v{FORMAT_VERSION}"
        header = json.loads(lines[1])
        assert header["spec_name"] == "ultraweak" and header["p"] == 2
        assert header["mesh"]["num_triangles"] == mesh.num_triangles

    def test_spec_mismatch_rejected(self, solved, tmp_path):
        mesh, f = solved
        path = tmp_path / "sol.txt"
        save_solution(f, path)
        with pytest.raises(PersistenceError, match="mismatch"):
            load_solution(path, "primal", mesh)

    def test_mesh_mismatch_rejected(self, solved, tmp_path):
        mesh, f = solved
        path = tmp_path / "sol.txt"
        save_solution(f, path)
        with pytest.raises(PersistenceError, match="mesh"):
            load_solution(path, "ultraweak", uniform_refine(mesh))

    def test_bad_version_rejected(self, solved, tmp_path):
        mesh, f = solved
        path = tmp_path / "sol.txt"
        save_solution(f, path)
        body = path.read_text().splitlines()
        body[0] = "solutionfile v99"
        path.write_text("\n".join(body) + "\n")
        with pytest.raises(PersistenceError, match="version"):
            load_solution(path, "ultraweak", mesh)

    def test_not_a_solution_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\n")
        with pytest.raises(PersistenceError):
            load_solution(path, "primal", build_square_mesh(1))

    def test_galerkin_file(self, tmp_path):
        smooth = smooth_solution_2d()
        mesh = build_square_mesh(2)
        f = solve_galerkin_primal(mesh, smooth.material, 1, bc_from_exact(smooth))
        path = tmp_path / "gal.txt"
        save_solution(f, path)
        g = load_solution(path, "galerkin", mesh)
        assert np.array_equal(g.coeffs["u"], f.coeffs["u"])


class TestManifest:
    def test_round_trip_with_hash_verify(self, tmp_path):
        art = tmp_path / "data.csv"
        art.write_text("a,b\n1,2\n")
        m = StudyManifest(config={"p": 1}, code_version="0.1.0")
        m.add_artifact("data", art)
        mpath = tmp_path / "manifest.json"
        m.save(mpath)
        loaded = StudyManifest.load(mpath, verify=True)
        assert loaded.config == {"p": 1}
        assert loaded.artifacts["data"]["sha256"] == sha256_file(art)

    def test_tampered_artifact_detected(self, tmp_path):
        art = tmp_path / "data.csv"
        art.write_text("a,b\n1,2\n")
        m = StudyManifest(config={})
        m.add_artifact("data", art)
        mpath = tmp_path / "manifest.json"
        m.save(mpath)
        art.write_text("a,b\n1,3\n")
        with pytest.raises(PersistenceError, match="hash"):
            StudyManifest.load(mpath, verify=True)

    def test_missing_artifact_detected(self, tmp_path):
        art = tmp_path / "data.csv"
        art.write_text("x\n")
        m = StudyManifest(config={})
        m.add_artifact("data", art)
        mpath = tmp_path / "manifest.json"
        m.save(mpath)
        art.unlink()
        with pytest.raises(PersistenceError):
            StudyManifest.load(mpath, verify=True)

    def test_load_without_verify(self, tmp_path):
        art = tmp_path / "data.csv"
        art.write_text("x\n")
        m = StudyManifest(config={})
        m.add_artifact("data", art)
        mpath = tmp_path / "manifest.json"
        m.save(mpath)
        art.unlink()
        loaded = StudyManifest.load(mpath, verify=False)
        assert "data" in loaded.artifacts
