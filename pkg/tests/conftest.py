import os

# single-threaded BLAS, so timing criteria are measured on one core
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from whisker_rc.whisker import Material, WhiskerGeometry, build_whisker  # noqa: E402

# closed-form Euler-Bernoulli cantilever roots of 1 + cos(x) cosh(x) = 0
CANTILEVER_LAMBDA = (1.87510407, 4.69409113, 7.85475744)


@pytest.fixture(scope="session")
def default_whisker():
    return build_whisker(WhiskerGeometry.tapered(), Material())


@pytest.fixture(scope="session")
def uniform_whisker():
    return build_whisker(WhiskerGeometry.tapered(taper_ratio=1.0), Material())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cantilever_frequency(mode, geometry, material):
    """Closed-form natural frequency (Hz) of a uniform circular cantilever."""
    r = geometry.base_radius_m
    EI = material.youngs_modulus_pa * np.pi * r**4 / 4
    rhoA = material.density_kg_m3 * np.pi * r**2
    lam = CANTILEVER_LAMBDA[mode]
    return lam**2 / (2 * np.pi) * np.sqrt(EI / (rhoA * geometry.length_m**4))


SMALL_OVERRIDES = {
    "sampling": {"settle_s": 0.1, "window_s": 0.3},
    "classification": {"speeds_m_s": [0.2, 0.3], "trials_per_class": 6},
    "detector": {"train_per_class": 12, "holdout_samples": 25, "novel_samples": 10},
    "roughness": {"trials_per_level": 5},
    "mixture": {"trials": 10, "stream_samples": 6},
    "navigation": {"rows": 60, "duration_s": 3.0, "train_trials": 6},
}


def small_config_dict(**extra):
    """Default config shrunk so the whole pipeline runs in a few seconds."""
    from whisker_rc.config import default_config

    data = default_config().to_dict()
    for section, values in {**SMALL_OVERRIDES, **extra}.items():
        if isinstance(values, dict):
            data[section] = {**data[section], **values}
        else:
            data[section] = values
    return data


@pytest.fixture
def small_config():
    from whisker_rc.config import config_from_dict

    return config_from_dict(small_config_dict())
