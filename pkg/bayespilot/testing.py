import numpy as np
import pandas as pd

from .ocengine import dominated_mask


def assert_reports_equal(a, b, **kw):
    np.testing.assert_allclose(a[:8], b[:8], **kw)
    assert a.n_replicates == b.n_replicates
    assert a.n_unconverged == b.n_unconverged


def assert_matrices_equal(a, b):
    pd.testing.assert_frame_equal(a.table, b.table)
    assert a.fingerprint == b.fingerprint
    assert a.model == b.model
    assert a.binary == b.binary


def assert_pairwise_nondominated(points):
    ocs = np.array([p.report[:3] for p in points])
    assert not dominated_mask(ocs).any()
