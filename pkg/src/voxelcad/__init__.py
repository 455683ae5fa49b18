"""Voxel-volume computer-aided-diagnosis pipeline.

Library + CLI for binary AD/HC classification of volumetric scans:
RVOL volume I/O, seeded synthetic cohorts, grayscale / voxels-as-features
extraction, PCA dimensionality reduction, SVM and feed-forward ANN
classifiers, and stratified cross-validated evaluation.
"""

__version__ = "0.1.0"
