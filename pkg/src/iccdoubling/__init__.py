"""Invariant closed curves of 3D maps and the type of their doubling.

The typical route from parameters to a prediction::

    from iccdoubling import MIRA, classify

    f = MIRA.bind(a=-2.5, b=-0.85578, c=-2.45869)
    result = classify(f)
    result.verdict.topology      # Topology.CYLINDER
    result.verdict.prediction    # Prediction.LOOP_DOUBLING
"""

__version__ = "0.1.0"

from .cycles import (
    Aperiodic,
    Cycle,
    CycleKind,
    assign_roles,
    attractor_cycle,
    check_assumptions,
    find_saddle_on_icc,
    newton_cycle,
    third_eigenvalue_sign,
)
from .errors import IccError
from .linalg3 import chain_jacobian, eig3
from .manifold import DoublingOutcome, Icc, IccKind, resonant_icc, verify_post_doubling
from .maps import (
    KAMIYAMA_A,
    KAMIYAMA_B,
    MIRA,
    MIRA_X,
    MapDef,
    Map3,
    get_map,
    ns_locus_mira,
    user_map,
)
from .pipeline import build_icc, classify, verify
from .quasi import order_cloud, rational_approx, rotation_number, sample_cloud
from .ribbon import Prediction, Topology, TopologyVerdict, build_ribbon, classify_topology, predict
from .scan import ParamPath, bifdiag, check_a4, locate_flip, scan2d
