import os
import subprocess
import sys

import numpy as np
import pytest

from chbiot import kernels
from chbiot.experiments import initial_state
from chbiot.material import MaterialParams
from chbiot.mesh import build_unit_square_mesh
from chbiot.scheme import SchemeConfig, step


def test_scatter_add_matches_bincount(kernel_backend, rng):
    target = rng.integers(0, 50, 1000)
    values = rng.standard_normal(1000)
    np.testing.assert_allclose(kernels.scatter_add(target, values, 50),
                               np.bincount(target, values, minlength=50), rtol=1e-13,
                               atol=1e-13)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    if expected == "numba" and not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    env = dict(os.environ, CHBIOT_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from chbiot import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_backends_give_the_same_step():
    s = initial_state(build_unit_square_mesh(3),
                      lambda x, y: -0.1 + 0.3 * np.sin(2 * np.pi * x) * np.sin(np.pi * y))
    cfg = SchemeConfig(tau=1e-3, T=1e-3)
    old = kernels.backend()
    try:
        kernels.set_backend("numpy")
        a, aa, _ = step(s, MaterialParams(), cfg)
        kernels.set_backend("numba")
        b, ba, _ = step(s, MaterialParams(), cfg)
    finally:
        kernels.set_backend(old)
    np.testing.assert_allclose(a.phi, b.phi, atol=1e-12)
    np.testing.assert_allclose(aa.mu, ba.mu, atol=1e-10)
    np.testing.assert_allclose(a.u, b.u, atol=1e-13)
