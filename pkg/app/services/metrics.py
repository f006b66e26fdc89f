# services/metrics.py
"""QoS link and path metrics on the predicted topology."""
import math
from typing import Sequence, Tuple, Union

from app.core.exceptions import ContractViolationError, InvalidArgumentError
from app.schemas.metrics import UNBOUNDED, Duration, EdgeMetrics, PathMetrics, RelativeKinematics

LinkDuration = Union[float, Duration]


# =====================================================================
# LINK METRICS
# =====================================================================

def normalized_strength(mu: float, gamma_th: float, gamma_M: float) -> float:
    """
    Normalize an inferred mean strength onto (0, 1].

    Raises:
        ContractViolationError: If mu is not in (gamma_th, gamma_M]
    """
    if not gamma_th < mu <= gamma_M:
        raise ContractViolationError(
            f"mean strength {mu} dBm outside ({gamma_th}, {gamma_M}]"
        )
    return (mu - gamma_th) / (gamma_M - gamma_th)


def relative_kinematics(
    pos_a: Tuple[float, float],
    vel_a: Tuple[float, float],
    pos_b: Tuple[float, float],
    vel_b: Tuple[float, float],
    d: float,
) -> RelativeKinematics:
    """
    Reduce two node states to the scalar geometry of the duration formula.

    The displacement points from B to A and the velocity is that of B relative
    to A, so alpha = pi means B recedes along the line joining them.
    """
    dx, dy = pos_a[0] - pos_b[0], pos_a[1] - pos_b[1]
    vx, vy = vel_b[0] - vel_a[0], vel_b[1] - vel_a[1]
    delta_d = math.hypot(dx, dy)
    delta_v = math.hypot(vx, vy)
    if delta_d == 0.0 or delta_v == 0.0:
        alpha = 0.0
    else:
        cos_alpha = (dx * vx + dy * vy) / (delta_d * delta_v)
        alpha = math.acos(max(-1.0, min(1.0, cos_alpha)))
    return RelativeKinematics(delta_d=delta_d, delta_v=delta_v, alpha=alpha, d=d)


def duration_by_acute_form(k: RelativeKinematics) -> float:
    """Exit time written for alpha in [0, pi/2]; requires delta_v > 0."""
    root = k.d ** 2 - (k.delta_d * math.sin(k.alpha)) ** 2
    return (math.sqrt(max(root, 0.0)) + k.delta_d * math.cos(k.alpha)) / k.delta_v


def duration_by_obtuse_form(k: RelativeKinematics) -> float:
    """Exit time written for alpha in (pi/2, pi] through the supplement angle."""
    supplement = math.pi - k.alpha
    root = k.d ** 2 - (k.delta_d * math.sin(supplement)) ** 2
    return (math.sqrt(max(root, 0.0)) - k.delta_d * math.cos(supplement)) / k.delta_v


def link_duration(k: RelativeKinematics) -> LinkDuration:
    """
    Time until the pair leaves range d.

    Returns:
        Seconds (>= 0), or UNBOUNDED when the pair is relatively static

    Raises:
        InvalidArgumentError: If the pair is already out of range
    """
    if k.delta_d > k.d:
        raise InvalidArgumentError(
            f"nodes already out of range ({k.delta_d:.3f} m > {k.d:.3f} m)"
        )
    if k.delta_v == 0.0:
        return UNBOUNDED
    if k.alpha <= math.pi / 2.0:
        duration = duration_by_acute_form(k)
    else:
        duration = duration_by_obtuse_form(k)
    return max(duration, 0.0)


def link_connectivity(duration: LinkDuration, tau: float) -> float:
    """Fraction of the next period the link stays up, clamped to 1."""
    if tau <= 0:
        raise InvalidArgumentError("tau must be positive")
    if duration is UNBOUNDED:
        return 1.0
    if duration < 0:
        raise InvalidArgumentError("duration must be non-negative")
    return min(duration / tau, 1.0)


# =====================================================================
# PATH METRICS
# =====================================================================

def path_metrics(edges: Sequence[EdgeMetrics]) -> PathMetrics:
    """Concave rule for strength and connectivity, additive rule for hops."""
    if not edges:
        raise InvalidArgumentError("a path needs at least one edge")
    return PathMetrics(
        p_S=min(edge.l_S for edge in edges),
        p_C=min(edge.l_C for edge in edges),
        p_H=sum(edge.l_H for edge in edges),
    )
