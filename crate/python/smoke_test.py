"""Smoke test for the Python bindings.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/mpr-*.whl
"""

import math
import tempfile
from pathlib import Path

import mpr


def main() -> None:
    retrieval, curated, query = mpr.synthetic(400, 300, 6, seed=3, balanced_curation=100)
    assert len(retrieval) == 400 and retrieval.dim == 6
    assert dict(retrieval.axes()) == {"gender": 2, "race": 5}

    k = 20
    top = mpr.top_k(retrieval, query, k)
    scores = mpr.similarities(retrieval, query)
    assert top.k == k and len(scores) == 400
    assert top.indices() == sorted(sorted(range(400), key=lambda i: (-scores[i], i))[:k])

    oracle = mpr.mpr(top, retrieval, curated)
    closed = mpr.mpr_closed_form(top, retrieval, curated)
    assert abs(oracle["value"] - closed["value"]) < 1e-8, (oracle["value"], closed["value"])
    exact = mpr.mpr(top, retrieval, curated, oracle="finite")
    assert exact["method"] == "exact-finite" and exact["value"] > 0

    sel, trace = mpr.mopr_retrieve(retrieval, curated, query, k, 0.0, oracle="finite")
    assert trace["outcome"]["halted_by"] == "constraint-satisfied"
    assert mpr.mpr(sel, retrieval, curated, oracle="finite")["value"] < 1e-9
    assert sel.objective(scores) <= top.objective(scores)

    qp_sel, _ = mpr.mopr_qp(retrieval, curated, query, k, 0.5 * closed["value"])
    assert mpr.mpr_closed_form(qp_sel, retrieval, curated)["value"] <= 0.5 * closed["value"] + 1e-8

    assert mpr.mmr_retrieve(retrieval, query, k, 1.0) == top

    grid = [closed["value"], 0.5 * closed["value"], 0.0]
    rows = mpr.pareto_sweep(retrieval, curated, query, k, grid, jobs=2)
    assert [r["rho_target"] for r in rows] == grid
    assert abs(rows[0]["point"]["sim_frac_topk"] - 1.0) < 1e-12

    same = mpr.Dataset.from_arrays(["a", "b"], [[1.0, 0.0], [0.0, 1.0]], {"g": [0, 1]})
    other = mpr.Dataset.from_arrays(["c", "d"], [[1.0, 0.0], [0.0, 1.0]], {"g": [0, 1]}, role="curated")
    both = mpr.Selection(2, [0, 1])
    assert mpr.mpr_rkhs(both, same, other, kernel="gaussian:1.0")["value"] == 0.0

    assert mpr.query_budget(3, 0.1, 0.05, 10) == 10200
    assert mpr.query_budget(3, 0.1, 0.05, 10, tight=True) == 9900
    r = mpr.vc_rademacher_bound(3, 10200)
    assert r + math.sqrt(math.log(2 * 10 / 0.05) / (8 * 10200)) <= 0.1

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "pool.csv"
        retrieval.save(path)
        again = mpr.Dataset.load(path)
        assert again.ids() == retrieval.ids() and again.embeddings() == retrieval.embeddings()

    try:
        mpr.top_k(retrieval, query, 0)
    except mpr.MprError:
        pass
    else:
        raise AssertionError("k = 0 must be rejected")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
