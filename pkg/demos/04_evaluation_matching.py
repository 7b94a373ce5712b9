"""Evaluating unlabeled predictions: Hungarian matching vs majority voting.

Cluster ids carry no class names, so evaluation first matches prediction
labels to ground-truth classes. One-to-one Hungarian matching is strict
(every cluster must claim its own class); majority voting lets several
clusters merge into one class, which is the right tool when over-
clustering on purpose.
"""

import numpy as np

from unsupseg import (accumulate_overlaps, format_text_report, hungarian_match,
                      majority_vote, report, spearman_size_iou)

rng = np.random.default_rng(3)

# Ground truth: three classes painted in vertical bands.
gt = np.zeros((24, 24), dtype=np.uint8)
gt[:, 8:16] = 1
gt[:, 16:] = 2

# Predictions split class 2 into two clusters (ids 2 and 3) and get class
# boundaries slightly wrong.
pred = np.zeros((24, 24), dtype=np.uint8)
pred[:, 7:15] = 1
pred[:12, 15:] = 2
pred[12:, 15:] = 3

table = accumulate_overlaps([pred], [gt], n_classes=3, n_pred_labels=4)
print("intersection counts (rows = gt classes, cols = prediction labels):")
print(table.intersections)

# Hungarian needs K == C; with the extra cluster only majority voting fits.
matching = majority_vote(table)
print(f"\nmajority matching: {matching.label_map}")
rep = report(table, matching)
print(format_text_report(rep, ["background", "band_mid", "band_right"]))

# With K == C, Hungarian gives the strict one-to-one assignment.
square = accumulate_overlaps([np.minimum(pred, 2)], [gt], 3, 3)
strict = hungarian_match(square)
print(f"\nhungarian matching (clusters merged beforehand): {strict.label_map}")
print(format_text_report(report(square, strict),
                         ["background", "band_mid", "band_right"]))

# Size vs quality: bigger objects tend to be segmented better. The rank
# correlation quantifies that trend over per-class statistics.
sizes = rng.uniform(0.01, 0.4, 12)
ious = np.clip(sizes * 2.0 + rng.normal(0, 0.08, 12), 0, 1)
rho = spearman_size_iou(sizes, ious)
print(f"\nSpearman rank correlation of object size vs IoU: {rho:.2f}")
