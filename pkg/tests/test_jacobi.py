from __future__ import annotations

import json
import math

import jsonschema
import numpy as np
import pytest

from conftest import compile_source
from typeforge.jacobi import MODES, ConfigError, JacobiConfig, program_text, run_bench, true_residual
from typeforge.schema import REPORT_SCHEMA


def numpy_jacobi(shape, bc, tol, max_iters):
    """Plain sequential Jacobi with the same stopping rule; returns the residual history and field."""
    u = np.zeros(shape)
    faces = {"x-": (0, 0), "x+": (0, -1), "y-": (1, 0), "y+": (1, -1), "z-": (2, 0), "z+": (2, -1)}
    for face in ("x-", "x+", "y-", "y+", "z-", "z+"):
        d, g = faces[face]
        sl = [slice(None)] * 3
        sl[d] = g
        u[tuple(sl)] = bc.get(face, 0.0)
    history = []
    for it in range(max_iters):
        rel = true_residual(u, bc)
        history.append((it, rel))
        if rel < tol:
            return history, u, True
        new = u.copy()
        new[1:-1, 1:-1, 1:-1] = (u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1] + u[1:-1, 2:, 1:-1]
                                 + u[1:-1, :-2, 1:-1] + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]) * 1.0 / 6.0
        u = new
    return history, u, False


@pytest.mark.parametrize(
    "changes, fragment",
    [
        (dict(mode="chaotic"), "mode"),
        (dict(px=0), "px"),
        (dict(nx=2, px=3), "split"),
        (dict(tol=0.0), "tol"),
        (dict(tol=math.nan), "tol"),
        (dict(max_iters=0), "max_iters"),
        (dict(mode="async", halo=False), "halo"),
        (dict(bc={"w-": 1.0}), "faces"),
    ],
)
def test_config_errors(changes, fragment):
    with pytest.raises(ConfigError, match=fragment):
        JacobiConfig(**changes).validate()


def test_bc_is_normalised():
    cfg = JacobiConfig(bc={"z+": 2}).validate()
    assert cfg.bc == {"x-": 0.0, "x+": 0.0, "y-": 0.0, "y+": 0.0, "z-": 0.0, "z+": 2.0}


@pytest.mark.parametrize("mode", MODES)
def test_generated_program_typechecks(mode):
    typed = compile_source(program_text(JacobiConfig(mode=mode).validate()))
    assert typed.warnings == []


@pytest.mark.parametrize("shape, blocks", [((8, 8, 8), (1, 1, 1)), ((8, 8, 8), (2, 1, 1)), ((7, 6, 5), (2, 2, 1))])
@pytest.mark.parametrize("halo", [True, False])
def test_matches_numpy_oracle(shape, blocks, halo):
    bc = {"x-": 1.0, "z+": 0.5}
    cfg = JacobiConfig(*shape, *blocks, tol=1e-4, max_iters=2000, bc=bc, halo=halo)
    report = run_bench(cfg)
    history, field, converged = numpy_jacobi(shape, bc, 1e-4, 2000)
    r = report.result
    assert r.converged and converged
    assert r.iterations == len(history) - 1
    for (i, a), (j, b) in zip(r.residual_history, history):
        assert i == j
        assert a == pytest.approx(b, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(r.arrays["data"].gather_global(), field, rtol=1e-12, atol=0)
    assert report.final_true_residual == pytest.approx(history[-1][1], rel=1e-12)


def test_report_validates_against_schema():
    report = run_bench(JacobiConfig(6, 6, 6, 2, 1, 1, mode="async", tol=1e-3), seed=1, debug_versions=True)
    doc = json.loads(json.dumps(report.to_json()))
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["derived"]["messages_per_iteration"]["halo_face"] > 0
    assert report.checked_faces > 0 and report.soundness_violations == 0


def test_timing_can_be_pinned():
    report = run_bench(JacobiConfig(4, 4, 4))
    assert report.to_json(timing=False)["result"]["wall_time_s"] == 0.0
    assert report.to_json()["result"]["wall_time_s"] > 0.0
