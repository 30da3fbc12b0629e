"""Smoke test for the linescan_ad extension module.

Build and install first, for example:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/linescan_ad-*.whl
"""

import math
import os
import tempfile

import linescan_ad as la


def main():
    cube, mask = la.gen_synthetic(lines=300, pixels=64, bands=16, seed=1, target_base_size=8)
    assert cube.shape == (300, 64, 16)
    assert mask.anomaly_count() == (64 + 16 + 4 + 1 + 1 + 1) * 4

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cube.hadc")
        la.write_cube(path, cube)
        back = la.read_cube(path)
        assert back.data() == cube.data()
        mpath = os.path.join(tmp, "mask.hadc")
        la.write_mask(mpath, mask)
        assert la.read_mask(mpath).data() == mask.data()

    det = la.Detector("erx", cube.bands, buffer=20, seed=3)
    scored = []
    for t in range(cube.lines):
        scored.extend(det.push(cube.pixels, cube.line(t)))
    scored.extend(det.finish())
    assert [s.index for s in scored] == list(range(cube.lines))
    assert all(s.warmup == (s.index < 20) for s in scored)
    assert all(v >= 0 and math.isfinite(v) for s in scored for v in s.raw_scores)

    for kind in ["erx", "rx-baseline", "rt-ck-rxd", "rx-bil", "lbl-ad"]:
        result = la.run(kind, cube, mask, buffer=20, direction="flipped")
        assert 0.0 <= result["auc"] <= 1.0, result
        print(f"{kind:12s} auc={result['auc']:.3f} lps={result['lps']:.0f}")

    assert la.roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    td, bs = la.auc_td_bs([1.0, 1.0, 0.0, 0.0], [1, 1, 0, 0])
    assert (td, bs) == (1.0, 1.0)

    try:
        la.Detector("nope", 4)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown detector accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
