import numpy as np
import pytest

from graphaug.tensor import Tensor, finite_diff_grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Componentwise relative error with clamped denominators."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_grad(f, x: np.ndarray, tol: float = 1e-3, eps: float = 1e-5) -> float:
    """Assert backward() on f matches central differences at x."""
    xt = Tensor(np.asarray(x, dtype=float), requires_grad=True)
    loss = f(xt)
    loss.backward()
    analytic = xt.grad.copy()
    numeric = finite_diff_grad(f, Tensor(np.asarray(x, dtype=float)), eps=eps).data
    err = rel_err(analytic, numeric)
    assert err <= tol, f"gradient mismatch: rel err {err:.3e}"
    return err


@pytest.fixture(scope="session")
def mutag_dir():
    from pathlib import Path
    path = Path(__file__).resolve().parent.parent / "data" / "MUTAG"
    if not (path / "MUTAG_A.txt").exists():
        pytest.skip("MUTAG dataset files not present under data/MUTAG")
    return path
