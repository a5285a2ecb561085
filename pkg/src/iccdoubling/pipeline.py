"""End-to-end helpers: find the curve at given parameters and classify it."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cycles import DEFAULT_SEED, Aperiodic, attractor_cycle, find_saddle_on_icc
from .errors import NoConvergence
from .manifold import Icc, resonant_icc, verify_post_doubling
from .quasi import order_cloud, rational_approx, sample_cloud
from .ribbon import DEFAULT_P_MAX, MAX_STEP_DEG, WINDOW, TopologyVerdict, predict

QUASI_SAMPLES = 200_000


@dataclass
class CaseResult:
    icc: Icc
    verdict: TopologyVerdict | None = None
    attractor: object = field(default=None, repr=False)


def build_icc(fmap, kind=None, seed=DEFAULT_SEED, transient=10_000, n=QUASI_SAMPLES,
              n_points=1000, p_max=64) -> Icc:
    """The attracting curve at ``fmap``'s parameters.

    ``kind`` is ``"resonant"``, ``"quasiperiodic"`` or ``None`` (decided by
    whether the attractor is a cycle).
    """
    att = None
    if kind in (None, "resonant"):
        att = attractor_cycle(fmap, p_max=p_max, transient=transient, seed=seed)
        if kind is None:
            kind = "quasiperiodic" if isinstance(att, Aperiodic) else "resonant"
    if kind == "resonant":
        if isinstance(att, Aperiodic):
            raise NoConvergence(f"no cycle of period <= {p_max} attracts the orbit")
        saddle = find_saddle_on_icc(fmap, att)
        return resonant_icc(fmap, att, saddle)
    cloud = sample_cloud(fmap, n=n, transient=transient, seed=seed)
    return order_cloud(cloud, n_points=n_points)


def classify(fmap, kind=None, p=None, p_max=DEFAULT_P_MAX, window=WINDOW,
             max_step_deg=MAX_STEP_DEG, **icc_kwargs) -> CaseResult:
    """Build the curve at ``fmap``'s parameters and classify its doubling ribbon."""
    icc = build_icc(fmap, kind, **icc_kwargs)
    verdict = predict(icc, fmap, p=p, p_max=p_max, window=window, max_step_deg=max_step_deg)
    return CaseResult(icc, verdict)


def verify(fmap_before, after: dict, icc_before: Icc | None = None, p=None, **kwargs):
    """Post-doubling outcome for the parameter change ``after``."""
    if icc_before is None:
        icc_before = build_icc(fmap_before)
    if p is None and icc_before.period is None and icc_before.rotation is not None:
        p = rational_approx(icc_before.rotation, DEFAULT_P_MAX).p
    return verify_post_doubling(fmap_before.with_params(**after), icc_before, p=p, **kwargs)

