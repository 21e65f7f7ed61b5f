"""Domain types shared across the auditing pipeline.

Group labels are dense small integers 0..J (callers map their grouping
conditions to labels upstream), model outputs live in [0, 1], and every
type rejects invariant-violating values at construction instead of
clamping them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class AuditError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AuditError):
    """A value violates a domain invariant (out of range, wrong shape)."""


class ConfigurationError(AuditError):
    """A configuration object is internally inconsistent."""


class InvariantError(AuditError):
    """A runtime invariant failed, signalling an inconsistent caller input
    (e.g. a corrective scale too large for the observed weights)."""


class SessionStateError(AuditError):
    """An operation was applied to a session in a terminal state."""


class IngestError(AuditError):
    """A malformed or invalid input line; carries the 1-based line number."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# Group labels are plain ints; range against the configured group count is
# enforced where that count is known (engine / ingest).
GroupLabel = int


def _check_unit_interval(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")


def _check_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0.0):
        raise ValidationError(f"{name} must be a positive finite real, got {value!r}")


@dataclass(frozen=True, slots=True)
class AuditRecord:
    """One streamed observation: a model output for one group at one time.

    ``propensity`` is the sampling probability of the observed point under
    the data-collection policy; ``density`` (or ``density_estimate``) is the
    population density of the same point, so their ratio is the importance
    weight used by the weighted payoffs.
    """

    t: int
    group: GroupLabel
    y_hat: float
    propensity: float | None = None
    density: float | None = None
    density_estimate: float | None = None

    def __post_init__(self):
        if not isinstance(self.t, int) or self.t < 1:
            raise ValidationError(f"t must be a positive integer, got {self.t!r}")
        if not isinstance(self.group, int) or self.group < 0:
            raise ValidationError(f"group must be a nonnegative integer, got {self.group!r}")
        _check_unit_interval("y_hat", self.y_hat)
        if self.propensity is not None:
            _check_positive("propensity", self.propensity)
        if self.density is not None:
            if not (math.isfinite(self.density) and self.density >= 0.0):
                raise ValidationError(f"density must be a nonnegative finite real, got {self.density!r}")
        if self.density_estimate is not None:
            _check_positive("density_estimate", self.density_estimate)


@dataclass(frozen=True, slots=True)
class Simple:
    """Bet on the raw difference of the two groups' outputs."""


@dataclass(frozen=True, slots=True)
class Batched:
    """Accumulate asynchronous arrivals per group and bet on the means of
    the pending batches; abstain while either group has nothing pending."""


@dataclass(frozen=True, slots=True)
class Propensity:
    """Bet on the importance-weighted difference of outputs.

    ``scale`` is the predictable corrective factor keeping the weighted
    payoff argument inside [-1, 1]; it must satisfy scale <= 1 / (2 * w)
    for every observable weight w, which is validated per record.
    """

    scale: float

    def __post_init__(self):
        _check_positive("scale", self.scale)


@dataclass(frozen=True, slots=True)
class EstimatedDensity:
    """Weighted betting with an estimated population density.

    ``delta_min`` / ``delta_max`` bound the multiplicative error of the
    density estimate from below / above; ``scale`` plays the corrective
    role and must satisfy scale <= delta_min / (2 * w_hat) at every
    observable point.
    """

    delta_min: float
    delta_max: float
    scale: float

    def __post_init__(self):
        _check_positive("delta_min", self.delta_min)
        _check_positive("delta_max", self.delta_max)
        _check_positive("scale", self.scale)
        if self.delta_min > self.delta_max:
            raise ValidationError(
                f"delta_min must not exceed delta_max, got {self.delta_min!r} > {self.delta_max!r}"
            )


@dataclass(frozen=True, slots=True)
class Composite:
    """Two one-sided games testing whether the mean gap exceeds epsilon."""

    epsilon: float

    def __post_init__(self):
        if not (isinstance(self.epsilon, (int, float)) and 0.0 < self.epsilon < 1.0):
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")


PayoffStrategy = Simple | Batched | Propensity | EstimatedDensity | Composite

_STRATEGY_TAGS: dict[type, str] = {
    Simple: "simple",
    Batched: "batched",
    Propensity: "propensity",
    EstimatedDensity: "estimated_density",
    Composite: "composite",
}


def strategy_tag(strategy: PayoffStrategy) -> str:
    return _STRATEGY_TAGS[type(strategy)]


def strategy_to_dict(strategy: PayoffStrategy) -> dict:
    d = {"kind": strategy_tag(strategy)}
    if isinstance(strategy, Propensity):
        d["scale"] = strategy.scale
    elif isinstance(strategy, EstimatedDensity):
        d.update(delta_min=strategy.delta_min, delta_max=strategy.delta_max, scale=strategy.scale)
    elif isinstance(strategy, Composite):
        d["epsilon"] = strategy.epsilon
    return d


def strategy_from_dict(d: dict) -> PayoffStrategy:
    kind = d.get("kind")
    if kind == "simple":
        return Simple()
    if kind == "batched":
        return Batched()
    if kind == "propensity":
        return Propensity(scale=d["scale"])
    if kind == "estimated_density":
        return EstimatedDensity(delta_min=d["delta_min"], delta_max=d["delta_max"], scale=d["scale"])
    if kind == "composite":
        return Composite(epsilon=d["epsilon"])
    raise ValidationError(f"unknown strategy kind {kind!r}")


@dataclass(frozen=True, slots=True)
class AuditConfig:
    """Everything needed to run one audit session deterministically."""

    alpha: float
    strategy: PayoffStrategy = field(default_factory=Simple)
    group_count: int = 2
    randomized_final_step: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not isinstance(self.group_count, int) or self.group_count < 2:
            raise ValidationError(f"group_count must be an integer >= 2, got {self.group_count!r}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(slots=True)
class BettorState:
    """Internal state of the betting rule: current bet and the running sum
    of squared normalized gradients."""

    lam: float = 0.0
    grad_sq_sum: float = 0.0
    domain: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        lo, hi = self.domain
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= 0.0 <= hi):
            raise ConfigurationError(f"bet domain must be a finite interval containing 0, got {self.domain!r}")
        if not (lo <= self.lam <= hi):
            raise ValidationError(f"lam {self.lam!r} outside domain {self.domain!r}")
        if self.grad_sq_sum < 0.0:
            raise ValidationError(f"grad_sq_sum must be nonnegative, got {self.grad_sq_sum!r}")


@dataclass(slots=True)
class WealthState:
    """Running wealth of one game, kept in log space, plus the payoff-argument
    sums used by diagnostics and the wealth-bound oracle."""

    log_wealth: float = 0.0
    step: int = 0
    s_sum: float = 0.0
    v_sum: float = 0.0
    w_sum: float = 0.0
    trajectory: list[tuple[int, float]] | None = None

    @property
    def wealth(self) -> float:
        if self.log_wealth > 709.0:  # exp overflow guard; log form stays authoritative
            return math.inf
        return math.exp(self.log_wealth)


class DecisionKind(enum.Enum):
    REJECT = "reject"
    CONTINUE = "continue"
    FINAL_RANDOMIZED_REJECT = "final_randomized_reject"
    FINAL_FAIL_TO_REJECT = "final_fail_to_reject"


@dataclass(frozen=True, slots=True)
class Decision:
    kind: DecisionKind
    tau: int | None = None
    u_draw: float | None = None

    def __post_init__(self):
        if self.kind is DecisionKind.REJECT and self.tau is None:
            raise ValidationError("a rejection must carry its stopping time")
        final = self.kind in (DecisionKind.FINAL_RANDOMIZED_REJECT, DecisionKind.FINAL_FAIL_TO_REJECT)
        if final != (self.u_draw is not None):
            raise ValidationError("u_draw must be present exactly for final randomized decisions")
        if self.u_draw is not None and not (0.0 < self.u_draw < 1.0):
            raise ValidationError(f"u_draw must lie in (0, 1), got {self.u_draw!r}")

    @property
    def is_rejection(self) -> bool:
        return self.kind in (DecisionKind.REJECT, DecisionKind.FINAL_RANDOMIZED_REJECT)

    @property
    def is_terminal(self) -> bool:
        return self.kind is not DecisionKind.CONTINUE


@dataclass(frozen=True, slots=True)
class GameReport:
    """Outcome of one betting game inside a composite or multi-group audit."""

    game_id: str
    log_wealth_final: float
    wealth_final: float
    rejected: bool
    tau: int | None = None
    trajectory: list[tuple[int, float]] | None = None


@dataclass(frozen=True, slots=True)
class AuditReport:
    """Full, serializable outcome of an audit session.

    ``trajectory`` holds (step, log wealth) pairs of the decision statistic
    (the per-step maximum over games when several run); log wealth is the
    authoritative form, the linear value is derived.
    """

    decision: Decision
    config_echo: AuditConfig
    wealth_final: float
    log_wealth_final: float
    trajectory: list[tuple[int, float]] | None = None
    per_game: list[GameReport] | None = None

    def __post_init__(self):
        multi = isinstance(self.config_echo.strategy, Composite) or self.config_echo.group_count > 2
        if multi != (self.per_game is not None):
            raise ValidationError(
                "per_game must be present exactly for composite or multi-group audits"
            )
