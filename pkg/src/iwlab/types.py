"""The types module contains common type annotation definitions."""

from pathlib import Path
import typing as t

import numpy as np
from typing_extensions import Literal


def _get_literal_args(literal_type) -> tuple:  # pragma: no cover
    """Return the arguments passed to ``Literal`` for Python versions lacking
    ``typing.get_args``."""
    if hasattr(t, "get_args"):
        # pylint: disable=no-member
        return t.get_args(literal_type)  # type: ignore
    return literal_type.__args__


StrPath = t.Union[str, Path]
# A derivative is named by the axes it differentiates along, e.g. (0, 1) is D_1 D_2.
MultiIndex = t.Tuple[int, ...]
FieldFn = t.Callable[[np.ndarray, np.ndarray, t.Optional[np.ndarray], MultiIndex], np.ndarray]

IdentityName = Literal["fubini", "real-iw", "weak-iw", "mollified", "diagnostics"]
StopKind = Literal["horizon", "first-exit"]

IDENTITY_NAMES: t.Tuple[str, ...] = _get_literal_args(IdentityName)
STOP_KINDS: t.Tuple[str, ...] = _get_literal_args(StopKind)
