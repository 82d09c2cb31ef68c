from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from amw._backend import KERNELS


def _backend_under(value):
    env = {**os.environ, "AMW_BACKEND": value}
    return subprocess.run([sys.executable, "-c", "import amw; print(amw.BACKEND)"],
                          capture_output=True, text=True, env=env)


def test_force_python_backend():
    proc = _backend_under("python")
    assert proc.returncode == 0 and proc.stdout.strip() == "python"


def test_invalid_backend_rejected():
    proc = _backend_under("fortran")
    assert proc.returncode != 0 and "AMW_BACKEND" in proc.stderr


@pytest.mark.skipif("compiled" not in KERNELS, reason="compiled kernel not built")
def test_compiled_backend_default():
    proc = _backend_under("")
    assert proc.stdout.strip() == "compiled"
    assert _backend_under("compiled").stdout.strip() == "compiled"


def test_kernel_contract_edge_cases(kernel):
    ref = np.array([0.1, 0.2, 0.2, 0.5])
    idx = np.array([7, 3, 5, 1], dtype=np.int64)
    nb, ds = kernel(np.array([0.2, 0.0, 0.9]), ref, idx, 2)
    np.testing.assert_array_equal(nb, [[3, 5], [7, 3], [1, 3]])
    np.testing.assert_allclose(ds, [[0, 0], [0.1, 0.2], [0.4, 0.7]])
    nb, ds = kernel(np.array([0.3]), ref, idx, 10)
    assert nb.shape == (1, 4) and sorted(nb[0]) == [1, 3, 5, 7]
    nb, _ = kernel(np.empty(0), ref, idx, 2)
    assert nb.shape == (0, 2)
