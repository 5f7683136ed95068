"""Smoke test for the compass extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`, then
run `python crates/py/python/smoke_test.py`.
"""

import math
import tempfile
from pathlib import Path

import compass


def main():
    plan = compass.FloorPlan.generate(seed=3)
    print(plan)

    d = compass.compute_descriptor(plan, 2.0, 2.0, yaw=0.0)
    assert d.n_bins == 360
    assert len(d.rows()) == 5
    stats = d.stats()
    assert stats["wall_bins"] + stats["window_bins"] + stats["open_bins"] == 360
    print(stats["summary"])

    # rotating by whole bins permutes columns exactly
    step = 2 * math.pi / 360
    rotated = compass.compute_descriptor(plan, 2.0, 2.0, yaw=17 * step)
    assert rotated == d.shifted(17)

    shift, score = compass.best_shift(d, rotated)
    assert (360 - shift) % 360 == 17 and abs(score - 1.0) < 1e-9

    db = compass.Database.build(plan, grid_step=1.0)
    hits = db.query(d.shifted(-40), top_k=3)
    best = hits[0]
    assert (best["x"], best["y"]) == (2.0, 2.0), best
    assert abs(math.degrees(best["yaw"]) % 360 - 320.0) < 1e-6, best

    rep = compass.agreement(d, d, 0)
    assert rep["agree_count"] == 360 and rep["summary"].startswith("360 out of 360")

    cam = compass.CameraModel(400.0, 736.0, 720.0, 1472, 1440, k=(0.01, -0.002, 0.0, 0.0))
    px = cam.project(cam.unproject(900.0, 500.0))
    assert abs(px[0] - 900.0) < 1e-6 and abs(px[1] - 500.0) < 1e-6

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "db.cmpd"
        db.save(path)
        again = compass.Database.load(path)
        assert len(again) == len(db)

    summary = compass.run_eval(plan, db, trials=20, seed=1)
    assert summary["trials"] == 20
    print("rank-1 rate:", summary["rank1_rate"])
    print("ok")


if __name__ == "__main__":
    main()
