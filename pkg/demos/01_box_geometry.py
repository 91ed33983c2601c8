"""Bounding-box geometry: normalization, canonicalization and the three
localization measures, cross-checked against a brute-force grid oracle."""

import numpy as np

from fovlink.dataset import PixelBBox
from fovlink.geometry import canonicalize_bbox, iou, normalize_bbox, overlap_recall, overlaps

# A pedestrian annotation in pixel space, mapped into the unit reference
# system where (0,0) is the top-left corner and (1,1) the bottom-right.
gt = normalize_bbox(PixelBBox(480, 320, 960, 640), width=1920, height=1280)
print("ground truth:", gt.as_list())

# Model replies order corners arbitrarily and sometimes run out of frame.
gen = canonicalize_bbox((0.55, 0.62), (0.22, 0.18))
print("generated:   ", gen.as_list(), "clamped:", gen.clamped)

print("overlap:      ", overlaps(gt, gen))
print("overlap recall:", round(overlap_recall(gt, gen), 4))
print("iou:           ", round(iou(gt, gen), 4))

# Sanity-check the analytic intersection against counting cell centers on
# a 1000x1000 grid, the independent oracle used by the test suite.
n = 1000
centers = (np.arange(n) + 0.5) / n
in_gt = np.outer(
    (centers >= gt.y) & (centers <= gt.y2), (centers >= gt.x) & (centers <= gt.x2)
)
in_gen = np.outer(
    (centers >= gen.y) & (centers <= gen.y2), (centers >= gen.x) & (centers <= gen.x2)
)
grid_recall = np.count_nonzero(in_gt & in_gen) / np.count_nonzero(in_gt)
print("grid-oracle recall:", round(float(grid_recall), 4))

# An oversized box reaches full recall but IoU penalizes it.
whole_frame = canonicalize_bbox((0.0, 0.0), (1.0, 1.0))
print("\nwhole-frame reply: recall", overlap_recall(gt, whole_frame), "iou", round(iou(gt, whole_frame), 4))
