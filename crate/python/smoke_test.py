"""Smoke test for the compiled `aviseg` extension module.

Build with `cargo build --release -p aviseg-python --features extension-module`,
copy `target/release/libaviseg.so` to `aviseg.so` somewhere on PYTHONPATH, then run
this script.
"""

import math
import os
import sys
import tempfile

import aviseg


def main() -> int:
    fm, y = aviseg.generate_synthetic(80, 6, [(0, 1.0), (1, 1.0)], noise_sd=0.1, intercept=10.0, seed=3)
    assert (fm.n, fm.d) == (80, 6)
    rows = fm.rows()

    eu = aviseg.pairwise_distances(rows)
    ident = aviseg.pairwise_distances(rows, metric=aviseg.MetricMatrix.identity(6))
    assert eu == ident, "Euclidean and Mahalanobis(I) disagree"

    protos, radius = aviseg.select_prototypes(eu, 10)
    assert len(protos) == 10 and radius > 0

    cs = aviseg.find_constraints(rows, y)
    assert cs["similar"] and cs["dissimilar"]

    metric, report = aviseg.fit("mmc", rows, cs["similar"], cs["dissimilar"])
    assert metric.form == "diagonal" and report["iterations"] == len(report["trace"])
    top = aviseg.feature_importance(metric, fm.columns, 2)
    print("mmc top features:", top)

    for alg in ("itml", "lmnn"):
        m, rep = aviseg.fit(alg, rows, cs["similar"], cs["dissimilar"], cs["triplets"], mu=0.9)
        assert m.min_eigenvalue() > -1e-8
        print(f"{alg}: {rep['iterations']} iterations, stop={rep['stop_reason']}")

    labels = aviseg.segment(aviseg.pairwise_distances(rows, metric=metric), 5)
    assert len(labels) == 80 and max(labels) == 4
    mr = aviseg.maximum_range(labels, y)
    assert mr >= 0 and math.isfinite(mr)
    assert aviseg.coefficient_of_variation([2.0]) == 0.0

    with tempfile.TemporaryDirectory() as tmp:
        cfg = aviseg.write_synthetic(tmp, n=60, d=5)
        files = aviseg.run_pipeline(cfg, os.path.join(tmp, "out"))
        names = {os.path.basename(f) for f in files}
        assert "report_long.csv" in names, names
        print(f"pipeline wrote {len(files)} files")

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
