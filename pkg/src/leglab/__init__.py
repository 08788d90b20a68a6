"""leglab: holomorphic Legendrian curves on planar circular domains.

Set LEGLAB_THREADS to cap the BLAS/OpenMP thread pools; it must be set
before the first import of numpy to take effect.
"""

import os as _os

_threads = _os.environ.get("LEGLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .contact import ContactForm, ContactIso, JetSpec, LegendrianCurve, apply_iso, verify_legendrian  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .geometry import AdmissibleSet, Arc, CircularDomain, CompactSet, Disk, LineSegment  # noqa: E402
from .laurent import LaurentPoly, OneForm, evaluate  # noqa: E402
from .paths import connect_legendrian  # noqa: E402
from .pipeline import (  # noqa: E402
    ProblemSpec,
    RunReport,
    approximate_legendrian,
    certify,
    extend_with_outside_jets,
    push_boundary,
    run_carleman,
    run_mergelyan_theorem,
    run_push,
    upgrade_proper,
)
from .targets import TargetCurve  # noqa: E402

__version__ = "0.1.0"
