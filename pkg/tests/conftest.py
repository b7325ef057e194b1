import warnings

import numpy as np
import pytest

from whitconv import Params


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture
def p0():
    return Params(0.0)


@pytest.fixture(params=[-0.5, 0.0, 0.25], ids=lambda a: f"alpha={a}")
def p_any(request):
    return Params(request.param)


def ks_crit(n, m=None):
    """Asymptotic 1% critical value of the KS statistic (one or two samples)."""
    eff = n if m is None else n * m / (n + m)
    return 1.628 / np.sqrt(eff)
