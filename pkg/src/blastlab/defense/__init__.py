from blastlab.defense.detectors import (
    DetectionReport,
    DetectionScores,
    activation_clustering,
    detection_metrics,
    kmeans,
    pca_project,
    roc_auc,
    silhouette,
    spectral_scores,
    spectral_signature,
)
from blastlab.defense.records import ActivationRecords, collect_activations

__all__ = [
    "ActivationRecords", "DetectionReport", "DetectionScores", "activation_clustering",
    "collect_activations", "detection_metrics", "kmeans", "pca_project", "roc_auc", "silhouette",
    "spectral_scores", "spectral_signature",
]
