"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set SMOOTHEXT_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the parity tests).
"""

import os

from . import _kernels_py as _py

try:
    from . import _kernels_c as _c
except ImportError:  # extension not built
    _c = None

HAVE_COMPILED = _c is not None


def _impl():
    if _c is not None and os.environ.get("SMOOTHEXT_PURE_PYTHON") != "1":
        return _c
    return _py


def pairwise_max_quotient(vals, pts, p=2.0):
    return _impl().pairwise_max_quotient(vals, pts, p)


def cone_min(vals, pts, queries, slope, p=2.0):
    return _impl().cone_min(vals, pts, queries, slope, p)


def cone_max(vals, pts, queries, slope, p=2.0):
    return _impl().cone_max(vals, pts, queries, slope, p)


def lattice_envelope_net(vals, steps, t, radius, sign):
    impl = _impl()
    try:
        return impl.lattice_envelope_net(vals, steps, t, radius, sign)
    except NotImplementedError:
        return _py.lattice_envelope_net(vals, steps, t, radius, sign)


def lattice_envelope_at(vals, origin, steps, t, radius, sign, queries):
    impl = _impl()
    try:
        return impl.lattice_envelope_at(vals, origin, steps, t, radius, sign, queries)
    except NotImplementedError:
        return _py.lattice_envelope_at(vals, origin, steps, t, radius, sign, queries)
