"""Smoke test for the pyroigrasp extension module."""

import math
import pathlib
import sys
import tempfile

import pyroigrasp as rg


def main():
    a = rg.OrientedRect(0.0, 0.0, 2.0, 2.0, 0.0)
    b = rg.OrientedRect(0.0, 0.0, 2.0, 2.0, 45.0)
    assert abs(rg.rotated_iou(a, b) - 1.0 / math.sqrt(2.0)) < 1e-9
    assert rg.rotated_iou(a, a) == 1.0
    assert rg.box_iou((0, 0, 2, 2), (1, 0, 3, 2)) == 1.0 / 3.0
    assert rg.angle_distance(-89.0, 89.0) == 2.0

    back = rg.OrientedRect.from_vertices(b.vertices())
    assert all(abs(p - q) < 1e-6 for p, q in zip(back.to_tuple(), b.to_tuple()))

    anchors = rg.anchor_grid((10, 20, 80, 90), grid_w=7, grid_h=7, k=4)
    assert len(anchors) == 7 * 7 * 4
    grasp = rg.OrientedRect(40.0, 50.0, 30.0, 12.0, 20.0)
    for anchor in anchors[:8]:
        decoded = rg.decode(rg.encode(grasp, anchor, 4), anchor, 4)
        assert all(abs(p - q) < 1e-9 for p, q in zip(decoded.to_tuple(), grasp.to_tuple()))

    rects = [grasp, rg.OrientedRect(41.0, 50.0, 30.0, 12.0, 20.0), rg.OrientedRect(200.0, 50.0, 30.0, 12.0, 0.0)]
    assert rg.nms_grasps(rects, [0.9, 0.8, 0.7], 0.3) == [0, 2]
    assert rg.nms_boxes([(0, 0, 10, 10), (1, 0, 11, 10)], ["cup", "pen"], [0.9, 0.8], 0.3) == [0, 1]
    assert abs(rg.total_loss(1.0, [2.0, 4.0], 2) - 4.0) < 1e-15

    with tempfile.TemporaryDirectory() as tmp:
        root = pathlib.Path(tmp) / "data"
        rg.synthesize(str(root), '{"seed": 3, "n_scenes": 10}')
        report = rg.evaluate((root / "detections.jsonl").read_text(), str(root))
        assert 0.0 <= report["map"] <= 1.0
        assert 0.0 <= report["lamr"] <= 1.0
        assert report["n_images"] == 10
        assert report["curve"][-1][0] == math.inf
        print(
            f"mr0 {report['mr0']:.3f}  lamr {report['lamr']:.3f}  mAP {report['map']:.3f}"
            f"  over {report['n_gt']} objects"
        )

    try:
        rg.OrientedRect(0.0, 0.0, -1.0, 1.0, 0.0)
    except ValueError:
        pass
    else:
        sys.exit("negative width was accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
