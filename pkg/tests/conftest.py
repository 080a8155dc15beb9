import logging

import numpy as np
import pytest

from hosprisk import cohort, ingest, synthgen


@pytest.fixture(autouse=True)
def _quiet_ingest():
    logging.getLogger("hosprisk").setLevel(logging.ERROR)
    yield


def _corpus(tmp_path_factory, name, **kw):
    out = tmp_path_factory.mktemp(name)
    manifest = synthgen.generate_to_dir(synthgen.GeneratorConfig(**kw), out)
    return out, manifest


@pytest.fixture(scope="session")
def corpus50(tmp_path_factory):
    """Seed-7, 50-patient corpus on disk with its manifest."""
    return _corpus(tmp_path_factory, "corpus50", n_patients=50, seed=7)


@pytest.fixture(scope="session")
def corpus200(tmp_path_factory):
    return _corpus(tmp_path_factory, "corpus200", n_patients=200, seed=11)


@pytest.fixture(scope="session")
def cohort200(corpus200):
    path, manifest = corpus200
    ds = ingest.load_dataset(path)
    return ds, cohort.build_feature_matrix(ds), manifest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
