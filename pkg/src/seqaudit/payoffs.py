"""Payoff constructions: each maps incoming observations plus the current bet
to a positive multiplicative wealth factor and the realized payoff argument
that feeds back into the bettor.

All variants share the shape 1 + lam * g where g is built so that its
conditional mean is zero (or nonpositive) whenever the audited group means
are equal (or within tolerance), which is what makes the wealth process a
test supermartingale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import (
    AuditRecord,
    EstimatedDensity,
    InvariantError,
    ValidationError,
    _check_positive,
    _check_unit_interval,
)

# Slack for validating caller-supplied corrective scales against observed
# weights; violations beyond this are treated as real configuration bugs
# rather than float noise.
_SCALE_RTOL = 1e-9


def _check_lam(lam: float) -> None:
    if not (math.isfinite(lam) and -0.5 <= lam <= 0.5):
        raise ValidationError(f"bet must lie in [-1/2, 1/2], got {lam!r}")


@dataclass(frozen=True, slots=True)
class PropensityContext:
    """Importance weights of the two observed points plus the predictable
    corrective scale bounding the weighted payoff argument in [-1, 1]."""

    omega_0: float
    omega_1: float
    scale: float

    def __post_init__(self):
        _check_positive("omega_0", self.omega_0)
        _check_positive("omega_1", self.omega_1)
        _check_positive("scale", self.scale)


@dataclass(frozen=True, slots=True)
class EstimatedDensityContext:
    """Like :class:`PropensityContext` but with weights from an estimated
    density and the multiplicative error bounds of that estimate."""

    omega_hat_0: float
    omega_hat_1: float
    scale: float
    delta_min: float
    delta_max: float

    def __post_init__(self):
        _check_positive("omega_hat_0", self.omega_hat_0)
        _check_positive("omega_hat_1", self.omega_hat_1)
        _check_positive("scale", self.scale)
        _check_positive("delta_min", self.delta_min)
        _check_positive("delta_max", self.delta_max)
        if self.delta_min > self.delta_max:
            raise ValidationError(
                f"delta_min must not exceed delta_max, got {self.delta_min!r} > {self.delta_max!r}"
            )


@dataclass(frozen=True, slots=True)
class BatchAccumulator:
    """Outputs accumulated per group since the last bet fired."""

    pending_0: tuple[float, ...] = ()
    pending_1: tuple[float, ...] = ()

    @property
    def ready(self) -> bool:
        return bool(self.pending_0) and bool(self.pending_1)


def payoff_simple(y0: float, y1: float, lam: float) -> tuple[float, float]:
    """1 + lam * (y0 - y1); the argument is the raw output difference."""
    _check_unit_interval("y0", y0)
    _check_unit_interval("y1", y1)
    _check_lam(lam)
    g = y0 - y1
    return 1.0 + lam * g, g


def payoff_propensity(y0: float, y1: float, ctx: PropensityContext, lam: float) -> tuple[float, float]:
    """Importance-weighted payoff 1 + lam * scale * (y0 * w0 - y1 * w1).

    The per-record check scale * w_b <= 1/2 is what keeps the argument in
    [-1, 1]; an inconsistent caller-supplied scale breaks the supermartingale
    property, so it fails loudly instead of being rescaled.
    """
    _check_unit_interval("y0", y0)
    _check_unit_interval("y1", y1)
    _check_lam(lam)
    bound = 0.5 * (1.0 + _SCALE_RTOL)
    if ctx.scale * ctx.omega_0 > bound or ctx.scale * ctx.omega_1 > bound:
        raise InvariantError(
            f"corrective scale {ctx.scale!r} exceeds 1/(2w) at an observed point "
            f"(weights {ctx.omega_0!r}, {ctx.omega_1!r})"
        )
    g = ctx.scale * (y0 * ctx.omega_0 - y1 * ctx.omega_1)
    if abs(g) > 1.0 + _SCALE_RTOL:
        raise InvariantError(f"weighted payoff argument {g!r} escaped [-1, 1]")
    return 1.0 + lam * g, g


def payoff_estimated_density(
    y0: float, y1: float, ctx: EstimatedDensityContext, lam: float
) -> tuple[float, float]:
    """Weighted payoff under an estimated density, with the two sides scaled
    by the error bounds so the conditional mean stays <= 1 under the null.
    With delta_min = delta_max = 1 and exact weights this reduces bit-for-bit
    to :func:`payoff_propensity`.
    """
    _check_unit_interval("y0", y0)
    _check_unit_interval("y1", y1)
    _check_lam(lam)
    bound = 0.5 * ctx.delta_min * (1.0 + _SCALE_RTOL)
    if ctx.scale * ctx.omega_hat_0 > bound or ctx.scale * ctx.omega_hat_1 > bound:
        raise InvariantError(
            f"corrective scale {ctx.scale!r} exceeds delta_min/(2w) at an observed point "
            f"(weights {ctx.omega_hat_0!r}, {ctx.omega_hat_1!r})"
        )
    g = ctx.scale * (y0 * ctx.omega_hat_0 / ctx.delta_max - y1 * ctx.omega_hat_1 / ctx.delta_min)
    if abs(g) > 1.0 + _SCALE_RTOL:
        raise InvariantError(f"weighted payoff argument {g!r} escaped [-1, 1]")
    return 1.0 + lam * g, g


def payoff_composite(
    y0: float, y1: float, epsilon: float, lam_q: float, lam_r: float
) -> tuple[float, float, float, float]:
    """The two one-sided payoffs (q, r) with arguments g_q = y0 - y1 - eps
    and g_r = y1 - y0 - eps; both stay >= 1 - (1 + eps)/2 > 0 for bets in
    [-1/2, 1/2]."""
    _check_unit_interval("y0", y0)
    _check_unit_interval("y1", y1)
    if not (0.0 < epsilon < 1.0):
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    _check_lam(lam_q)
    _check_lam(lam_r)
    g_q = y0 - y1 - epsilon
    g_r = y1 - y0 - epsilon
    return 1.0 + lam_q * g_q, 1.0 + lam_r * g_r, g_q, g_r


def batch_push(acc: BatchAccumulator, record: AuditRecord) -> BatchAccumulator:
    """Append a record's output to its group's pending batch."""
    if record.group == 0:
        return replace(acc, pending_0=acc.pending_0 + (record.y_hat,))
    if record.group == 1:
        return replace(acc, pending_1=acc.pending_1 + (record.y_hat,))
    raise ValidationError(f"batched payoffs audit two groups, got group {record.group!r}")


def batch_payoff(acc: BatchAccumulator, lam: float) -> tuple[float, float, BatchAccumulator]:
    """Bet on the difference of the pending batch means, or abstain.

    While either group's batch is empty the payoff is exactly 1 (wealth is
    untouched) and the accumulator is returned unchanged; once both are
    nonempty the batches are consumed.
    """
    _check_lam(lam)
    if not acc.ready:
        return 1.0, 0.0, acc
    g0 = math.fsum(acc.pending_0) / len(acc.pending_0)
    g1 = math.fsum(acc.pending_1) / len(acc.pending_1)
    g = g0 - g1
    return 1.0 + lam * g, g, BatchAccumulator()


def weight_from_record(record: AuditRecord, estimated: bool = False) -> float:
    """Importance weight of one record: (estimated) density over propensity."""
    rho = record.density_estimate if estimated else record.density
    label = "density_estimate" if estimated else "density"
    if record.propensity is None or rho is None:
        raise ValidationError(
            f"record at t={record.t} group={record.group} lacks propensity or {label} "
            "required by the weighted payoff"
        )
    return rho / record.propensity


def propensity_context(rec0: AuditRecord, rec1: AuditRecord, scale: float) -> PropensityContext:
    return PropensityContext(
        omega_0=weight_from_record(rec0),
        omega_1=weight_from_record(rec1),
        scale=scale,
    )


def estimated_density_context(
    rec0: AuditRecord, rec1: AuditRecord, strategy: EstimatedDensity
) -> EstimatedDensityContext:
    return EstimatedDensityContext(
        omega_hat_0=weight_from_record(rec0, estimated=True),
        omega_hat_1=weight_from_record(rec1, estimated=True),
        scale=strategy.scale,
        delta_min=strategy.delta_min,
        delta_max=strategy.delta_max,
    )
