"""Tests for the acceptance gates."""

import numpy as np
import pytest

from vem.gates import AcceptanceGate, get_acceptance_gate
from vem.models import (
    ErrorReport, IdentityReport, LevelRecord, MeshFamily, MeshFamilyConfig, RateFit, StabilizationVariant,
)


def study_report(rate, r2, family=MeshFamily.CUBE, k=1, rho=(0.3, 0.3, 0.3)):
    levels = [2, 4, 8]
    records = [
        LevelRecord(level=i, n=n, h_max=np.sqrt(3.0) / n, ndof=n ** 3, energy_err=1.0 / n,
                    h1_err=1.0 / n, l2_err=1.0 / n ** 2, min_rho_F=r, min_rho_K=0.28, cg_iters=4)
        for i, (n, r) in enumerate(zip(levels, rho))
    ]
    return ErrorReport(family=MeshFamilyConfig(family=family, levels=levels), k=k, problem="sinsinsin",
                       variant=StabilizationVariant.NEW, records=records,
                       rates={"energy_err": RateFit(rate=rate, r2=r2, expected=float(k))})


def identity_report(residual):
    return IdentityReport(trials=3, quad_order=10, max_residual=residual, max_relative_residual=residual,
                          max_literal_residual=residual, max_abs_lhs=1.0, max_abs_rhs=1.0,
                          residuals=[residual] * 3)


class TestRateGate:
    """Decisions on the energy-norm rate."""

    @pytest.fixture
    def gate(self):
        return AcceptanceGate()

    def test_pass(self, gate):
        decision = gate.evaluate_rates(study_report(rate=1.02, r2=0.999))
        assert decision.decision == "pass"
        assert decision.constraints["required_rate"] == pytest.approx(0.9)

    def test_rate_below_threshold(self, gate):
        decision = gate.evaluate_rates(study_report(rate=0.85, r2=0.999))
        assert decision.decision == "fail"
        assert "below" in decision.reason

    def test_threshold_scales_with_order(self, gate):
        assert gate.evaluate_rates(study_report(rate=1.7, r2=0.999, k=2)).decision == "fail"
        assert gate.evaluate_rates(study_report(rate=1.85, r2=0.999, k=2)).decision == "pass"

    def test_poor_fit_on_uniform_family(self, gate):
        assert gate.evaluate_rates(study_report(rate=1.1, r2=0.9)).decision == "non_asymptotic"

    def test_poor_fit_allowed_on_slit_family(self, gate):
        report = study_report(rate=1.1, r2=0.9, family=MeshFamily.SLIT)
        assert gate.evaluate_rates(report).decision == "pass"

    def test_chunkiness_decrease(self, gate):
        report = study_report(rate=1.0, r2=0.99, family=MeshFamily.SLIT, rho=(0.2, 0.1, 0.05))
        assert gate.evaluate_rates(report, min_rho_decrease=3.5).decision == "pass"
        assert gate.evaluate_rates(report, min_rho_decrease=5.0).decision == "fail"

    def test_missing_rate(self, gate):
        report = study_report(rate=None, r2=None)
        assert gate.evaluate_rates(report).decision == "fail"

    def test_errors_become_failures(self, gate):
        report = study_report(rate=1.0, r2=0.99)
        report.records = []
        decision = gate.evaluate_rates(report, min_rho_decrease=2.0)
        assert decision.decision == "fail"
        assert decision.constraints == {"error": "rate_evaluation_failed"}


class TestIdentityGate:

    def test_pass_and_fail(self):
        gate = AcceptanceGate()
        assert gate.evaluate_identity(identity_report(1e-9)).decision == "pass"
        assert gate.evaluate_identity(identity_report(1e-3)).decision == "fail"
        assert gate.evaluate_identity(identity_report(1e-9), threshold=1e-12).decision == "fail"

    def test_global_instance(self):
        assert get_acceptance_gate() is get_acceptance_gate()
