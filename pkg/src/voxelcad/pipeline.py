"""End-to-end pipelines: features -> (PCA) -> z-score -> classifier.

Three presets mirror the comparison table:

  PCA-SVM  blocked grayscale statistics -> PCA projection -> SVM
  PCA-ANN  blocked grayscale statistics -> PCA projection -> ANN
  VAF-SVM  raw voxel intensities -> SVM (no PCA), same kernel preset

The z-score standardizer is always fit on training data only and is stored
inside the classifier model so a serialized bundle predicts stand-alone.
PCA itself mean-centers internally; optional unit-variance scaling before
PCA (pca_prescale) is carried as a separate bundle field so the PCA model
keeps its plain centered form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ann, svm
from .config import RunConfig
from .features import FeatureKind, block_features, vaf_features
from .labels import from_sign, to_sign
from .pca import PcaModel, fit_pca, project
from .volume import Volume

PIPELINES = ("PCA-SVM", "PCA-ANN", "VAF-SVM")


def canonical_pipeline(name: str) -> str:
    pid = str(name).strip().upper()
    if pid not in PIPELINES:
        raise ValueError(
            f"unknown pipeline {name!r}; choose from {', '.join(p.lower() for p in PIPELINES)}"
        )
    return pid


def pipeline_feature_kind(pipeline: str, cfg: RunConfig) -> FeatureKind:
    """The voxel baseline always takes raw intensities; PCA pipelines follow cfg."""
    if canonical_pipeline(pipeline) == "VAF-SVM":
        return FeatureKind.VAF
    return cfg.feature_kind_enum()


def fit_standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (mean, sigma); zero-variance columns get sigma 1."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    means = X.mean(axis=0)
    sigmas = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    sigmas = np.where(sigmas > 0.0, sigmas, 1.0)
    return means, sigmas


def apply_standardization(X: np.ndarray, std) -> np.ndarray:
    means, sigmas = std
    return (np.asarray(X, dtype=np.float64) - means) / sigmas


@dataclass(frozen=True)
class PipelineModel:
    """Self-contained bundle: feature recipe + optional PCA + classifier."""

    pipeline: str
    feature_kind: FeatureKind
    block_grid: tuple[int, int, int] | None
    bins: int | None
    prescale: tuple[np.ndarray, np.ndarray] | None
    pca: PcaModel | None
    classifier: svm.SvmModel | ann.AnnModel

    def to_dict(self) -> dict:
        if isinstance(self.classifier, svm.SvmModel):
            clf = {"type": "SVM", "model": self.classifier.to_dict()}
        else:
            clf = {"type": "ANN", "model": self.classifier.to_dict()}
        means, sigmas = self.prescale if self.prescale else (None, None)
        return {
            "version": 1,
            "pipeline": self.pipeline,
            "feature_kind": self.feature_kind.value,
            "block_grid": list(self.block_grid) if self.block_grid else None,
            "bins": self.bins,
            "prescale": None if means is None else
                {"means": means.tolist(), "sigmas": sigmas.tolist()},
            "pca": self.pca.to_dict() if self.pca is not None else None,
            "classifier": clf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineModel":
        clf = d["classifier"]
        if clf["type"] == "SVM":
            classifier = svm.SvmModel.from_dict(clf["model"])
        elif clf["type"] == "ANN":
            classifier = ann.AnnModel.from_dict(clf["model"])
        else:
            raise ValueError(f"unknown classifier type {clf['type']!r}")
        pre = d.get("prescale")
        return cls(
            pipeline=canonical_pipeline(d["pipeline"]),
            feature_kind=FeatureKind(d["feature_kind"]),
            block_grid=tuple(d["block_grid"]) if d.get("block_grid") else None,
            bins=d.get("bins"),
            prescale=None if pre is None else
                (np.array(pre["means"]), np.array(pre["sigmas"])),
            pca=PcaModel.from_dict(d["pca"]) if d.get("pca") is not None else None,
            classifier=classifier,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "PipelineModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_pipeline(pipeline: str, X: np.ndarray, labels, cfg: RunConfig,
                 ann_seed: int | None = None,
                 val_X: np.ndarray | None = None,
                 val_labels=None) -> PipelineModel:
    """Fit one preset on already-extracted features.

    X rows must match pipeline_feature_kind(pipeline, cfg). The validation
    set drives ANN early stopping only; SVM training ignores it.
    """
    pid = canonical_pipeline(pipeline)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    targets = np.array([to_sign(l) for l in labels], dtype=np.float64)
    if targets.shape[0] != X.shape[0]:
        raise ValueError("labels length does not match X rows")
    kind = pipeline_feature_kind(pid, cfg)

    prescale = None
    pca_model = None
    if pid in ("PCA-SVM", "PCA-ANN"):
        if cfg.pca_prescale:
            prescale = fit_standardization(X)
            X = apply_standardization(X, prescale)
            if val_X is not None:
                val_X = apply_standardization(val_X, prescale)
        pca_model = fit_pca(X, cum_threshold=cfg.pca_threshold)
        X = project(pca_model, X)
        if val_X is not None:
            val_X = project(pca_model, val_X)

    std = fit_standardization(X)
    Xs = apply_standardization(X, std)

    if pid.endswith("SVM"):
        classifier = svm.train_svm(Xs, targets, C=cfg.C, kernel=cfg.kernel_spec(),
                                   tol=cfg.svm_tol, standardization=std)
    else:
        vXs = vt = None
        if val_X is not None:
            vXs = apply_standardization(val_X, std)
            vt = np.array([to_sign(l) for l in val_labels], dtype=np.float64)
        train_cfg = cfg.train_config(seed=ann_seed)
        classifier = ann.train_ann(Xs, targets, train_cfg, val_X=vXs,
                                   val_targets=vt, standardization=std)

    grayscale = kind is FeatureKind.GRAYSCALE
    return PipelineModel(
        pipeline=pid,
        feature_kind=kind,
        block_grid=tuple(cfg.block_grid) if grayscale else None,
        bins=cfg.bins if grayscale else None,
        prescale=prescale,
        pca=pca_model,
        classifier=classifier,
    )


def _model_space(model: PipelineModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if model.prescale is not None:
        X = apply_standardization(X, model.prescale)
    if model.pca is not None:
        X = project(model.pca, X)
    std = model.classifier.standardization
    if std is not None:
        X = apply_standardization(X, std)
    return X


def predict_matrix(model: PipelineModel, X: np.ndarray) -> tuple[list[str], np.ndarray]:
    """Labels and decision scores for raw feature rows (pre-PCA space)."""
    Z = _model_space(model, X)
    if isinstance(model.classifier, svm.SvmModel):
        scores = svm.decision_batch(model.classifier, Z)
    else:
        scores = ann.forward_batch(model.classifier, Z)
    return [from_sign(s) for s in scores], scores


def predict_volume(model: PipelineModel, vol: Volume) -> tuple[str, float]:
    """Extract this bundle's features from one volume and classify it."""
    if model.feature_kind is FeatureKind.GRAYSCALE:
        feats = block_features(vol, model.block_grid, model.bins)
    else:
        feats = vaf_features(vol)
    labels_out, scores = predict_matrix(model, feats[None, :])
    return labels_out[0], float(scores[0])
