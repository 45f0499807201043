from contextlib import contextmanager
import typing as t
from unittest import mock

import numpy as np

import iwlab


try:
    import fcntl
except ImportError:  # pragma: no cover
    fcntl = None  # type: ignore


USES_FCNTL_FULLSYNC = hasattr(fcntl, "F_FULLFSYNC")


@contextmanager
def patch_os_fsync() -> t.Iterator[mock.MagicMock]:
    if USES_FCNTL_FULLSYNC:
        patched_os_fsync = mock.patch("fcntl.fcntl")
    else:
        patched_os_fsync = mock.patch("os.fsync")

    with patched_os_fsync as mocked_os_fsync:
        yield mocked_os_fsync


def bank_from_paths(paths: t.Any, horizon: float = 1.0) -> iwlab.WienerBank:
    """Return a bank holding the given paths of shape ``(K, 2**level + 1)``."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    level = int(np.log2(paths.shape[1] - 1))
    assert 2 ** level + 1 == paths.shape[1]
    return iwlab.WienerBank(0, 0, iwlab.TimeGrid(horizon, level), paths)


def polynomial_field(coefs: t.Sequence[float], dimension: int = 1) -> iwlab.ClosedFormField:
    """Return ``x -> Σ_n coefs[n] x_1^n`` with exact derivatives along the first axis."""
    poly = np.polynomial.Polynomial(coefs)

    def fn(t_, x, w, alpha):
        if any(i != 0 for i in alpha):
            return 0.0
        return poly.deriv(len(alpha))(x[..., 0]) if alpha else poly(x[..., 0])

    return iwlab.ClosedFormField(dimension, 6, fn, name=f"poly{tuple(coefs)}")


def exp_field(rate: float) -> iwlab.ClosedFormField:
    """Return ``x -> exp(rate x)`` in one dimension."""

    def fn(t_, x, w, alpha):
        return rate ** len(alpha) * np.exp(rate * x[..., 0])

    return iwlab.ClosedFormField(1, 6, fn, name=f"exp({rate}x)")


def linear_combination(*terms: t.Tuple[float, iwlab.SpatialField]) -> iwlab.ClosedFormField:
    """Return ``Σ c_i f_i`` for ``terms = ((c_1, f_1), ...)`` with the lowest common order."""
    dimension = terms[0][1].dimension

    def fn(t_, x, w, alpha):
        return sum(c * f.evaluate(x, alpha, t_, w) for c, f in terms)

    return iwlab.ClosedFormField(dimension, min(f.order for _, f in terms), fn, name="combination")
