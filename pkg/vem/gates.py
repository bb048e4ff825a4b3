"""Acceptance gates that turn study and identity reports into pass/fail decisions."""

import logging
from typing import Optional

from vem.models import ErrorReport, GateDecisionModel, IdentityReport, MeshFamily

logger = logging.getLogger(__name__)

RATE_FACTOR = 0.9
R2_THRESHOLD = 0.98


class AcceptanceGate:
    """
    Deterministic decisions on convergence and identity reports.

    A study passes when the energy rate reaches 0.9 k. For uniform cube
    families the log-log fit must also have R^2 >= 0.98; a lower R^2 there
    yields ``non_asymptotic``. The identity check passes when the relative
    residual stays below the threshold.
    """

    def __init__(self, rate_factor: float = RATE_FACTOR, r2_threshold: float = R2_THRESHOLD):
        self.rate_factor = rate_factor
        self.r2_threshold = r2_threshold

    def evaluate_rates(self, report: ErrorReport, min_rho_decrease: Optional[float] = None) -> GateDecisionModel:
        """
        Gate the energy-norm rate of a study.

        Args:
            report: Completed convergence study
            min_rho_decrease: When given, also require min rho_F to shrink by
                at least this factor from the first to the last level

        Returns:
            GateDecisionModel with pass, non_asymptotic or fail
        """
        try:
            fit = report.rates.get("energy_err")
            required = self.rate_factor * report.k
            constraints = {
                "required_rate": required,
                "r2_threshold": self.r2_threshold,
                "rate": fit.rate if fit else None,
                "r2": fit.r2 if fit else None,
                "within_window": fit.within_window if fit else None,
            }
            if fit is None or fit.rate is None:
                return GateDecisionModel(decision="fail", reason="No energy rate could be fitted",
                                         constraints=constraints)
            if fit.rate < required:
                return GateDecisionModel(
                    decision="fail",
                    reason=f"Energy rate {fit.rate:.3f} below {required:.3f}",
                    constraints=constraints,
                )
            if min_rho_decrease is not None:
                first, last = report.records[0].min_rho_F, report.records[-1].min_rho_F
                ratio = first / last if last > 0 else float("inf")
                constraints["rho_F_decrease"] = ratio
                if ratio < min_rho_decrease:
                    return GateDecisionModel(
                        decision="fail",
                        reason=f"min rho_F decreased only {ratio:.2f}x (needs {min_rho_decrease}x)",
                        constraints=constraints,
                    )
            if report.family.family == MeshFamily.CUBE and fit.r2 < self.r2_threshold:
                return GateDecisionModel(
                    decision="non_asymptotic",
                    reason=f"Fit R^2 {fit.r2:.4f} below {self.r2_threshold} on a uniform family",
                    constraints=constraints,
                )
            decision = GateDecisionModel(
                decision="pass",
                reason=f"Energy rate {fit.rate:.3f} >= {required:.3f}",
                constraints=constraints,
            )
            logger.info(f"Rate gate for {report.family.family.value}, k={report.k}: {decision.decision}")
            return decision
        except Exception as e:
            logger.error(f"Rate gate evaluation failed: {e}")
            return GateDecisionModel(decision="fail", reason=f"Rate gate error: {e}",
                                     constraints={"error": "rate_evaluation_failed"})

    def evaluate_identity(self, report: IdentityReport, threshold: float = 1e-5) -> GateDecisionModel:
        """Gate the relative residual of the error-equation check."""
        constraints = {
            "threshold": threshold,
            "max_relative_residual": report.max_relative_residual,
            "trials": report.trials,
        }
        if report.max_relative_residual <= threshold:
            decision = GateDecisionModel(
                decision="pass",
                reason=f"Residual {report.max_relative_residual:.3e} <= {threshold:.1e}",
                constraints=constraints,
            )
        else:
            decision = GateDecisionModel(
                decision="fail",
                reason=f"Residual {report.max_relative_residual:.3e} exceeds {threshold:.1e}",
                constraints=constraints,
            )
        logger.info(f"Identity gate: {decision.decision}")
        return decision


# Global gate instance
_gate = None


def get_acceptance_gate() -> AcceptanceGate:
    """Get or create the global acceptance gate instance."""
    global _gate
    if _gate is None:
        _gate = AcceptanceGate()
    return _gate
