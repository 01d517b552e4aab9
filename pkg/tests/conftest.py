import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def assert_grad_close(analytic, numeric, rtol=1e-5, atol=1e-9):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    assert analytic.shape == numeric.shape
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(numeric), atol / rtol)
    assert diff <= rtol * scale + atol, f"gradient mismatch: |d|={diff:.3e}, scale={scale:.3e}"
