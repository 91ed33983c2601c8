"""The ten classification statistics derived from a confusion matrix."""

from fovlink.stats import STAT_NAMES, ConfusionMatrix, build_confusion_matrix, derive_detection_stats

# Join predictions against ground-truth labels. Scenes the backend never
# answered simply drop out of the join; the column-sum shortfall stays
# visible instead of being silently reconciled.
labels = [(f"pos_{i}", True) for i in range(8)] + [(f"neg_{i}", False) for i in range(8)]
predictions = [(scene_id, True) for scene_id, _ in labels[:10]] + [
    (scene_id, False) for scene_id, _ in labels[10:14]
]
cm = build_confusion_matrix(predictions, labels)
print(f"joined matrix: tp={cm.tp} fn={cm.fn_} fp={cm.fp} tn={cm.tn} (total {cm.total})")

# The two reference columns the acceptance suite checks to 0.01 points.
for name, matrix in [("model A", ConfusionMatrix(120, 6, 5, 129)), ("model B", ConfusionMatrix(125, 1, 11, 127))]:
    stats = derive_detection_stats(matrix)
    cells = "  ".join(f"{stat}={stats.require(stat) * 100:6.2f}%" for stat in STAT_NAMES[:4])
    print(f"{name}: {cells}")
    print(f"         accuracy={stats.require('accuracy') * 100:.2f}%  f1={stats.require('f1') * 100:.2f}%  mcc={stats.require('mcc') * 100:.2f}%")

# Undefined statistics are reported, never coerced to zero.
degenerate = derive_detection_stats(ConfusionMatrix(0, 0, 0, 5))
print("\nno positives in sight -> undefined:", ", ".join(degenerate.undefined))
