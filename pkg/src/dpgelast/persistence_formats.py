"""On-disk formats: solution snapshots and study manifests.

Both formats are plain text so regression baselines stay diffable.
Solution files carry a versioned header, the identifiers needed to
rebuild the discrete spaces (formulation, orders, material), a mesh
fingerprint, and one coefficient block per trial slot written with 17
significant digits, which round-trips doubles exactly.

A study manifest records the configuration snapshot, the artifact files
a run produced, and their sha256 hashes; loading verifies every file
still exists and hashes match.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .material import MaterialParams

FORMAT_VERSION = 1


class PersistenceError(RuntimeError):
    pass


def _mesh_fingerprint(mesh):
    return {
        "generation": int(mesh.generation),
        "num_vertices": int(mesh.num_vertices),
        "num_triangles": int(mesh.num_triangles),
    }


def save_solution(fields, path):
    """Write a SolutionFields snapshot as versioned decimal text."""
    path = Path(path)
    lines = [f"solutionfile v{FORMAT_VERSION}"]
    header = {
        "spec_name": fields.spec_name,
        "p": int(fields.p),
        "dp": int(fields.dp),
        "lam": repr(float(fields.material.lam)),
        "mu": repr(float(fields.material.mu)),
        "mesh": _mesh_fingerprint(fields.mesh),
        "slots": {name: [fields.spaces[name].kind, int(len(c))] for name, c in fields.coeffs.items()},
    }
    lines.append(json.dumps(header, sort_keys=True))
    for name in sorted(fields.coeffs):
        c = fields.coeffs[name]
        lines.append(f"slot {name} {len(c)}")
        lines.extend("%.17g" % v for v in c)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as err:
        raise PersistenceError(f"cannot write solution file {path}: {err}") from err


def load_solution(path, spec, mesh):
    """Reconstruct a SolutionFields snapshot written by save_solution.

    spec is the formulation id the file is expected to hold; mesh must
    carry the same generation fingerprint the solution was saved with.
    """
    from .forms import formulation, DESCRIPTORS
    from .dpg_solver import SolutionFields
    from .spaces import h1_space

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise PersistenceError(f"cannot read solution file {path}: {err}") from err
    lines = text.splitlines()
    if not lines or not lines[0].startswith("solutionfile v"):
        raise PersistenceError(f"{path}: not a solution file")
    version = int(lines[0].split("v")[-1])
    if version != FORMAT_VERSION:
        raise PersistenceError(f"{path}: unsupported format version {version}")
    header = json.loads(lines[1])
    if header["spec_name"] != spec:
        raise PersistenceError(
            f"{path}: formulation mismatch (file holds {header['spec_name']!r}, expected {spec!r})"
        )
    fp = _mesh_fingerprint(mesh)
    if fp != header["mesh"]:
        raise PersistenceError(
            f"{path}: mesh mismatch (file {header['mesh']}, given {fp})"
        )
    material = MaterialParams(lam=float(header["lam"]), mu=float(header["mu"]))
    p, dp = header["p"], header["dp"]
    coeffs = {}
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 3 or parts[0] != "slot":
            raise PersistenceError(f"{path}: malformed slot header at line {i + 1}")
        name, n = parts[1], int(parts[2])
        coeffs[name] = np.array([float(v) for v in lines[i + 1 : i + 1 + n]])
        i += 1 + n
    if set(coeffs) != set(header["slots"]):
        raise PersistenceError(f"{path}: slot blocks do not match the header")

    spec_base = {"fosls": "strong", "hybrid_mixed": "mixed"}.get(spec, spec)
    if spec_base in DESCRIPTORS:
        form = formulation(spec_base, mesh, material, p, dp=dp)
        spaces = dict(form.field_spaces)
        spaces.update(form.trace_spaces)
    elif spec == "galerkin":
        form = None
        spaces = {"u": h1_space(mesh, p, gamma0_constrained=True)}
    else:
        raise PersistenceError(f"{path}: unknown formulation {spec!r}")
    for name, (kind, n) in header["slots"].items():
        if name not in spaces or spaces[name].kind != kind or spaces[name].ndof != n:
            raise PersistenceError(
                f"{path}: slot {name!r} ({kind}, {n} dofs) does not match the rebuilt spaces"
            )
    return SolutionFields(
        mesh=mesh,
        material=material,
        spec_name=spec,
        p=p,
        dp=dp,
        spaces=spaces,
        coeffs=coeffs,
        form=form,
    )


# ---------------------------------------------------------------------------
# study manifests


def sha256_file(path):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


@dataclass
class StudyManifest:
    """Index of a study's artifacts with content hashes."""

    config: dict
    artifacts: dict = field(default_factory=dict)  # name -> {"file":, "sha256":}
    code_version: str = ""

    def add_artifact(self, name, path):
        self.artifacts[name] = {"file": str(Path(path).name), "sha256": sha256_file(path)}

    def save(self, path):
        payload = {
            "manifest_version": FORMAT_VERSION,
            "config": self.config,
            "artifacts": self.artifacts,
            "code_version": self.code_version,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, verify=True):
        path = Path(path)
        payload = json.loads(path.read_text())
        if payload.get("manifest_version") != FORMAT_VERSION:
            raise PersistenceError(f"{path}: unsupported manifest version")
        m = cls(
            config=payload["config"],
            artifacts=payload["artifacts"],
            code_version=payload.get("code_version", ""),
        )
        if verify:
            for name, entry in m.artifacts.items():
                f = path.parent / entry["file"]
                if not f.exists():
                    raise PersistenceError(f"manifest artifact missing: {f}")
                h = sha256_file(f)
                if h != entry["sha256"]:
                    raise PersistenceError(f"manifest hash mismatch for {f}")
        return m
