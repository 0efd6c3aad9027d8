"""Privacy ledger and composition of per-step guarantees.

Every local solve leaks one (eps, delta) step per agent; a run of T
rounds with E local updates is a TE-fold adaptive composition. Basic
composition adds budgets linearly. For homogeneous Gaussian steps the
moments-accountant argument gives the sqrt(TE) total implemented in
``compose(..., method="strong")``. The general advanced-composition
bound for heterogeneous mechanisms (the eps sqrt(2k ln(1/delta')) +
k eps (e^eps - 1) form) is deliberately not implemented; only these two
accountants are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .mechanisms import GAUSSIAN

BASIC = "basic"
STRONG = "strong"


class AccountingError(ValueError):
    pass


@dataclass(frozen=True)
class LedgerEntry:
    kind: str
    epsilon_bar: float
    delta_bar: float


@dataclass(frozen=True)
class CompositionResult:
    epsilon: float
    delta: float


@dataclass
class PrivacyLedger:
    """Append-only record of the per-step privacy parameters, in execution order."""

    entries: list[LedgerEntry] = field(default_factory=list)

    def record(self, kind: str, epsilon_bar: float, delta_bar: float) -> None:
        if epsilon_bar <= 0 or not math.isfinite(epsilon_bar):
            raise AccountingError("ledger entries need a finite positive epsilon_bar")
        if not 0.0 <= delta_bar < 1.0:
            raise AccountingError("ledger entries need delta_bar in [0, 1)")
        self.entries.append(LedgerEntry(kind, epsilon_bar, delta_bar))

    def __len__(self) -> int:
        return len(self.entries)

    def homogeneous_gaussian(self) -> bool:
        if not self.entries:
            return True
        first = self.entries[0]
        return all(
            e.kind == GAUSSIAN
            and e.epsilon_bar == first.epsilon_bar
            and e.delta_bar == first.delta_bar
            and 0.0 < e.delta_bar < 1.0
            for e in self.entries
        )


def moment_alpha(tau: int, epsilon_bar: float, delta_bar: float) -> float:
    """Log moment-generating-function bound of one Gaussian step at order tau.

    tau (tau + 1) eps^2 / (4 ln(1.25/delta)); order 0 carries no information.
    """
    if not 0.0 < delta_bar < 1.0:
        raise AccountingError("moment_alpha requires delta_bar in (0, 1)")
    if tau < 0:
        raise AccountingError("tau must be a nonnegative integer")
    return tau * (tau + 1) * epsilon_bar**2 / (4.0 * math.log(1.25 / delta_bar))


def compose(ledger: PrivacyLedger, method: str = BASIC) -> CompositionResult:
    """Total (epsilon, delta) of the recorded steps.

    ``basic`` sums both budgets. ``strong`` applies the Gaussian
    composition eps * sqrt(k ln(1/delta) / ln(1.25/delta)) with total
    delta equal to the per-step delta; it requires k homogeneous
    Gaussian entries.
    """
    if method == BASIC:
        # fsum keeps the linear total exactly rounded, so reordering
        # entries can never change the composed budget
        return CompositionResult(
            epsilon=math.fsum(e.epsilon_bar for e in ledger.entries),
            delta=math.fsum(e.delta_bar for e in ledger.entries),
        )
    if method != STRONG:
        raise AccountingError(f"unknown composition method {method!r}")
    if not ledger.entries:
        return CompositionResult(0.0, 0.0)
    if not ledger.homogeneous_gaussian():
        raise AccountingError(
            "strong composition requires homogeneous gaussian entries with delta in (0, 1)"
        )
    first = ledger.entries[0]
    k = len(ledger.entries)
    eps = first.epsilon_bar * math.sqrt(
        k * math.log(1.0 / first.delta_bar) / math.log(1.25 / first.delta_bar)
    )
    return CompositionResult(epsilon=eps, delta=first.delta_bar)


def verify_budget(ledger: PrivacyLedger, target: tuple[float, float], method: str = BASIC) -> bool:
    """True iff the composed total fits inside the target, boundary inclusive."""
    total = compose(ledger, method)
    eps_target, delta_target = target
    return total.epsilon <= eps_target and total.delta <= delta_target
