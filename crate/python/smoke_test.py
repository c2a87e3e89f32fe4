"""Smoke test for the pyfedrelax extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import json
import math
import tempfile
from pathlib import Path

import pyfedrelax as fr


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def hand_instance():
    # two nodes, one edge, x = 1, labels 1 and -1
    g = fr.Graph(2, [(0, 1, 1.0)])
    return fr.NetworkedData(g, [([[1.0]], [1.0]), ([[1.0]], [-1.0])], [[1.0]])


def main():
    nd = hand_instance()
    w = fr.oracle(nd, 1.0).parameters()
    assert close(w[0][0], 1 / 3) and close(w[1][0], -1 / 3), w

    h, logs = fr.run(nd, lam=1.0, schedule="sequential", max_rounds=2000, rel_objective_tol=0.0)
    assert logs[0]["round"] == 0 and logs[0]["objective"] == 2.0
    got = h.parameters()
    assert close(got[0][0], 1 / 3, 1e-8) and close(got[1][0], -1 / 3, 1e-8), got
    parts = fr.objective(h, nd, 1.0)
    assert close(parts["objective"], 4 / 3, 1e-8), parts
    assert close(parts["objective"], logs[-1]["objective"])

    g, clusters = fr.Graph.sbm(12, 2, 0.9, 0.1, seed=7)
    assert g.node_count == 12 and len(clusters) == 12
    lap = g.laplacian()
    assert all(abs(sum(row)) < 1e-12 for row in lap)
    data = fr.NetworkedData.synth(g, clusters, [[2.0, -1.0], [-1.5, 1.0]], 5, 20, 0.3, seed=11)
    assert data.dim == 2

    h1, logs1 = fr.run(data, lam=0.5)
    h2, logs2 = fr.run(data, lam=0.5)
    assert [l["objective"] for l in logs1] == [l["objective"] for l in logs2]
    assert logs1[-1]["objective"] < logs1[0]["objective"]
    assert h1.to_json() == h2.to_json()
    assert len(h1.test_predictions(data)) == 12

    trees, _ = fr.run(data, model=fr.ModelSpec.regression_tree(2), lam=0.5, max_rounds=5)
    assert json.loads(trees.to_json())["nodes"][0]["variant"] == "regression_tree"
    _, lossy = fr.run(data, lam=0.5, drop_prob=0.3, network_seed=3, max_rounds=10)
    assert all(math.isfinite(l["objective"]) for l in lossy)

    with tempfile.TemporaryDirectory() as tmp:
        paths = [str(Path(tmp) / n) for n in ("graph.json", "data.csv", "test.csv")]
        data.save(*paths)
        again = fr.NetworkedData.load(*paths)
        assert again.local_data(3) == data.local_data(3)
        try:
            fr.NetworkedData.load(paths[0], paths[1], str(Path(tmp) / "missing.csv"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file accepted")

    for bad in (lambda: fr.run(nd, lam=-1.0), lambda: fr.Graph(2, [(0, 5, 1.0)])):
        try:
            bad()
        except fr.FedRelaxError:
            pass
        else:
            raise AssertionError("bad input accepted")

    print("pyfedrelax smoke test passed")


if __name__ == "__main__":
    main()
