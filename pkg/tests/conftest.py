import numpy as np
import pytest

from voxelcad.config import RunConfig
from voxelcad.features import FeatureKind, build_feature_matrix
from voxelcad.synth import SynthConfig, generate_dataset

# small cohort used by the unit tests: big enough for 4-fold stratification,
# small enough that VAF feature vectors stay tiny (8*9*7 = 504 voxels)
SMALL = dict(n_ad=12, n_hc=8, dims=(8, 9, 7), seed=11,
             separation=3.0, noise_sigma=0.1)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """(manifest_path, SynthConfig) for a 20-subject synthetic cohort."""
    out = tmp_path_factory.mktemp("cohort20")
    cfg = SynthConfig(**SMALL)
    return generate_dataset(cfg, out), cfg


@pytest.fixture(scope="session")
def small_runconfig():
    """RunConfig matching small_dataset, downsized for fast training."""
    return RunConfig(n_ad=SMALL["n_ad"], n_hc=SMALL["n_hc"], dims=SMALL["dims"],
                     separation=SMALL["separation"], seed=SMALL["seed"],
                     hidden=4, max_iters=40, folds=4)


@pytest.fixture(scope="session")
def small_grayscale(small_dataset):
    manifest, _ = small_dataset
    return build_feature_matrix(manifest, FeatureKind.GRAYSCALE)


@pytest.fixture(scope="session")
def small_vaf(small_dataset):
    manifest, _ = small_dataset
    return build_feature_matrix(manifest, FeatureKind.VAF)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
