import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ssmhelm.evaluation.synth import SynthSpec, synth_generate
from ssmhelm.features import compute_features
from ssmhelm.labeler import EmptyBinWarning, label_table

settings.register_profile("ci", max_examples=60, deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def scene():
    """Small synthetic scene with features and labels, shared across tests."""
    result = synth_generate(SynthSpec(), seed=11)
    feats = compute_features(result.table)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyBinWarning)
        labels = label_table(result.table, feats, accel_floor=2.0)
    return result, feats, labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_HELM = dict(widths=(16, 16), classifier_width=200, gamma=1.0)
SMALL_BASE = dict(k_starts=20, n_trees=30)


@pytest.fixture(scope="session")
def bundle(scene):
    from ssmhelm.evaluation.experiment import REFERENCE_TEST_RATIO, build_bundle, sample_examined
    result, feats, labels = scene
    rows = sample_examined(labels.abnormal, 1.0, seed=0)
    n_test = int(round(REFERENCE_TEST_RATIO * labels.abnormal.sum()))
    return build_bundle(result.table, feats, labels, n_test, split_seed=0, rows=rows,
                        ttc_encoding="inverse")


@pytest.fixture(scope="session")
def grid(bundle):
    """All 9 runs on the small scene with reduced model sizes."""
    from ssmhelm.evaluation.experiment import BaselineHyper, run_grid
    from ssmhelm.helm import HelmHyper
    return run_grid(bundle, master_seed=0, helm_hyper=HelmHyper(**SMALL_HELM),
                    base_hyper=BaselineHyper(**SMALL_BASE))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
