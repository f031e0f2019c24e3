"""End-to-end check of the Python bindings on a synthetic scene.

Build the module first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
copy target/release/libtrunkgauge_py.so next to this script as
trunkgauge_py.so.
"""

import sys

import trunkgauge_py as tg


def main() -> int:
    scenes = [tg.synth_scene(seed=s, tilt_deg=3.0 * s, edge_jitter_px=2.0) for s in range(3)]
    w, h = scenes[0][0], scenes[0][1]

    clf = tg.Classifier.train([(w, h, rgb, mask) for (_, _, rgb, mask, _) in scenes[:2]], seed=7)
    print("pads at red:", clf.is_pads(*tg.srgb_to_uv(196, 32, 38)))

    _, _, rgb, _, truth = scenes[2]
    mask = clf.classify(w, h, rgb)
    result = tg.measure_diameter(w, h, mask, 20.0)
    expected = truth["gap_px"] * 20.0 / truth["pad_height_px"]
    err = abs(result["diameter_mm"] - expected)
    print(f"diameter {result['diameter_mm']:.3f} mm, truth {expected:.3f} mm, error {err:.3f} mm")

    mean, std, worst = tg.error_stats([result["diameter_mm"]], [expected])
    px = err / result["scale_mm_per_px"]
    ok = mean == err and px < 2.0
    print("ok" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
