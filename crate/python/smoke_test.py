#!/usr/bin/env python3
"""Build the travgate extension module, import it, and drive every exposed
surface once: grids, worlds, fusion, graph planning, gated estimation, the
scenario harness, and the certificate sweep. Prints OK when all checks hold.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "travgate-py", "--release"],
        cwd=ROOT,
        check=True,
    )
    workdir = Path(tempfile.mkdtemp(prefix="travgate_py_"))
    shutil.copy2(ROOT / "target" / "release" / "libtravgate.so", workdir / "travgate.so")
    sys.path.insert(0, str(workdir))


build_and_import()

import travgate  # noqa: E402


def expect_value_error(fn, needle):
    try:
        fn()
    except ValueError as e:
        assert needle in str(e), f"expected '{needle}' in error, got: {e}"
        return
    raise AssertionError(f"expected ValueError mentioning '{needle}'")


# Grids round-trip and validate.
tm = travgate.TravMap([[0.5, 1.0], [0.0, 0.25]])
assert (tm.height, tm.width) == (2, 2)
assert tm.rows()[1][1] == 0.25
assert tm.get(0, 1) == 1.0
assert repr(tm) == "TravMap(2x2)"
expect_value_error(lambda: travgate.TravMap([[2.0]]), "")
expect_value_error(lambda: travgate.TravMap([[0.1, 0.2], [0.3]]), "same length")
expect_value_error(lambda: tm.get(5, 0), "outside")

flat = travgate.TravMap.constant(2, 2, 0.5)
assert math.isclose(tm.mse(flat), (0.0 + 0.25 + 0.25 + 0.0625) / 4, rel_tol=0, abs_tol=1e-15)
assert travgate.mse(tm, tm) == 0.0

# Batch fusion with hand-checkable numbers: 0 and 1 at weights 1 and 3.
lo = travgate.TravMap.constant(2, 2, 0.0)
hi = travgate.TravMap.constant(2, 2, 1.0)
w1 = travgate.WeightMap.constant(2, 2, 1.0)
w3 = travgate.WeightMap.constant(2, 2, 3.0)
blend = travgate.fuse_batch([lo, hi], [w1, w3])
assert blend.rows() == [[0.75, 0.75], [0.75, 0.75]]
expect_value_error(lambda: travgate.fuse_batch([lo], [w1, w3]), "")

# Graph planning: all-clear 2x2 map, diagonal corners,two steps of
# auxiliary cost and zero node cost.
cost, path = travgate.graph_plan(travgate.TravMap.constant(2, 2, 1.0), (0, 0), (1, 1))
assert abs(cost - 0.02) < 1e-12, cost
assert len(path) == 3 and path[0] == (0, 0) and path[-1] == (1, 1)
blocked = travgate.TravMap([[1.0, 0.0], [0.0, 1.0]])
cost, path = travgate.graph_plan(blocked, (0, 0), (1, 1), theta=0.5)
assert math.isinf(cost) and path == []

# Worlds generate deterministically and round-trip through files.
world = travgate.World.generate(42, "indoor", 16, 16)
assert world.seed == 42 and world.domain == "indoor"
assert (world.height, world.width) == (16, 16)
assert world.cell_size == 0.25
gt = world.ground_truth()
values = [v for row in gt.rows() for v in row]
assert all(0.0 <= v <= 1.0 for v in values)
assert min(values) < 0.5 < max(values), "indoor worlds mix walls and floor"
x, y, z, yaw = world.start()
assert -math.pi <= yaw <= math.pi

again = travgate.World.generate(42, "indoor", 16, 16)
assert again.to_text() == world.to_text()

with tempfile.TemporaryDirectory() as td:
    stored = Path(td) / "w.world"
    world.save(str(stored))
    loaded = travgate.World.load(str(stored))
    assert loaded.to_text() == world.to_text()
    assert loaded.ground_truth().rows() == gt.rows()
expect_value_error(lambda: travgate.World.load("/nonexistent/w.world"), "/nonexistent/w.world")
expect_value_error(lambda: travgate.World.generate(1, "atlantis", 16, 16), "unknown domain")

# Gated estimation: an informed router on an indoor world stops early.
gated = travgate.gate(world, epsilon=0.05, informed=True)
assert gated.terminated_early
assert gated.experts_activated < gated.queue_len
assert gated.savings_fraction > 0.5
finite = [d for d in gated.deltas if math.isfinite(d)]
assert all(a >= b - 1e-9 for a, b in zip(finite, finite[1:])), "bracket must not widen"
fused = gated.fused()
assert (fused.height, fused.width) == (16, 16)

exhaustive = travgate.gate(world, epsilon=0.0, informed=True)
assert exhaustive.experts_activated == exhaustive.queue_len
assert exhaustive.savings_fraction == 0.0
assert travgate.gate(world, epsilon=0.05, informed=True).fused().rows() == fused.rows()

# Scenario harness end to end, twice, byte-identical.
with tempfile.TemporaryDirectory() as td:
    spec = Path(td) / "batch.scn"
    spec.write_text(
        "travgate-scenarios v1\n"
        "scenario corridor\n"
        "world seeded 42 indoor 16 16\n"
        "router gt_table 0.97\n"
        "reps 2\n"
        "end\n"
    )
    report = travgate.run_scenario_file(str(spec))
    assert report.scenarios == 2 and report.violations() == 0
    assert report.failures() == []
    assert 0.0 <= report.mean_q_p <= 1.0
    assert report.metrics_csv().startswith(
        "scenario_id,domain,e_p,e_m,q_p,flops_used,flops_full,"
        "savings_fraction,experts_activated\n"
    )
    assert report.metrics_csv() == travgate.run_scenario_file(str(spec)).metrics_csv()
    out = Path(td) / "out"
    out.mkdir()
    report.write_csv(str(out))
    assert (out / "metrics.csv").exists() and (out / "trace.csv").exists()

# Certificate sweep stays clean on a small randomized batch.
sweep = travgate.verify(trials=25, seed=11)
assert sweep.trials_run == 25
assert sweep.violations() == 0
assert sweep.max_bound_ratio <= 1.0 + 1e-9
assert "bound checks" in str(sweep)

print("OK")
