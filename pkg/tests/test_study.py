"""Tests for rate fitting, convergence studies and report files."""

import csv
import json

import numpy as np
import pytest

from vem.gates import AcceptanceGate
from vem.models import EpsRule, ErrorReport, LevelRecord, MeshFamily, MeshFamilyConfig, StabilizationVariant
from vem.solver import SolverError
from vem.study import (
    CSV_COLUMNS, ConvergenceStudy, StudyError, convergence_study, fit_rate, format_markdown, write_reports,
)


def make_record(level, n, error):
    return LevelRecord(level=level, n=n, h_max=np.sqrt(3.0) / n, ndof=10 * n, energy_err=error,
                       h1_err=error, l2_err=error / n, min_rho_F=0.3, min_rho_K=0.28, cg_iters=5)


class TestFitRate:

    def test_exact_power_law(self):
        h = np.array([1.0, 0.5, 0.25])
        fit = fit_rate(h, 3.0 * h ** 2, expected=2.0)
        assert fit.rate == pytest.approx(2.0)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.last_pair == pytest.approx(2.0)
        assert fit.within_window

    def test_window(self):
        h = np.array([1.0, 0.5, 0.25])
        assert not fit_rate(h, h ** 1.5, expected=1.0).within_window
        assert fit_rate(h, h ** 1.25, expected=1.0).within_window
        assert fit_rate(h, h, expected=None).within_window is None

    def test_noisy_fit_has_lower_r2(self):
        h = np.array([1.0, 0.5, 0.25, 0.125])
        fit = fit_rate(h, h * np.array([1.0, 2.0, 0.5, 1.0]))
        assert fit.r2 < 0.98

    def test_zero_error_has_no_rate(self):
        fit = fit_rate([1.0, 0.5], [1e-3, 0.0], expected=1.0)
        assert fit.rate is None
        assert fit.expected == 1.0


class TestConvergenceStudy:
    """Manufactured-solution studies over refinement families."""

    def test_too_few_levels(self):
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4])
        with pytest.raises(StudyError, match="at least 3"):
            ConvergenceStudy().run(family, 1)

    @pytest.mark.slow
    @pytest.mark.parametrize("k", [1, 2])
    def test_cube_family_rate(self, k):
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4, 8])
        report = ConvergenceStudy().run(family, k)
        energy = report.rates["energy_err"]
        assert energy.rate >= 0.9 * k
        assert energy.expected == k
        assert report.rates["l2_err"].expected == k + 1
        errors = [r.energy_err for r in report.records]
        assert errors == sorted(errors, reverse=True)

    @pytest.mark.slow
    def test_cube_family_fit_quality(self):
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4, 8, 16])
        report = ConvergenceStudy().run(family, 1)
        energy = report.rates["energy_err"]
        assert energy.rate >= 0.9
        assert energy.r2 >= 0.98
        assert energy.within_window is not None
        assert not report.non_asymptotic

    @pytest.mark.slow
    def test_original_variant_cube_rate(self):
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4, 8])
        report = ConvergenceStudy().run(family, 1, variant=StabilizationVariant.ORIGINAL)
        assert report.rates["energy_err"].rate >= 0.9

    @pytest.mark.slow
    def test_original_variant_on_slit_family(self):
        family = MeshFamilyConfig(family=MeshFamily.SLIT, levels=[2, 4, 8], eps_rule=EpsRule.H, eps_scale=0.5)
        report = ConvergenceStudy().run(family, 1, variant=StabilizationVariant.ORIGINAL)
        assert len(report.records) == 3
        assert report.rates["energy_err"].rate is not None
        assert all(r.energy_err > 0.0 for r in report.records)

    @pytest.mark.slow
    def test_slit_family_is_robust(self):
        """
        Property: robustness under shrinking apertures

        With eps = h / 2 the minimum face chunkiness shrinks by more than a
        factor 3.5 over the levels while the energy rate stays at order k.
        """
        family = MeshFamilyConfig(family=MeshFamily.SLIT, levels=[2, 4, 8], eps_rule=EpsRule.H, eps_scale=0.5)
        report = ConvergenceStudy().run(family, 1)
        assert [r.eps for r in report.records] == pytest.approx([0.25, 0.125, 0.0625])
        assert all(r.max_faces_per_cell == 10 for r in report.records)
        decision = AcceptanceGate().evaluate_rates(report, min_rho_decrease=3.5)
        assert decision.decision == "pass"
        assert decision.constraints["rho_F_decrease"] >= 3.5

    def test_levels_are_deterministic(self):
        family = MeshFamilyConfig(family=MeshFamily.PERTURBED, levels=[1, 2, 3], magnitude=0.1, seed=4)
        first = ConvergenceStudy().run(family, 1)
        second = ConvergenceStudy().run(family, 1)
        assert [r.model_dump() for r in first.records] == [r.model_dump() for r in second.records]

    def test_module_function_uses_original_variant(self):
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 3, 4])
        report = convergence_study(family, 1, problem="sinsinsin", variant=StabilizationVariant.ORIGINAL)
        assert report.variant == StabilizationVariant.ORIGINAL
        assert [r.n for r in report.records] == [2, 3, 4]
        assert report.rates["energy_err"].rate > 0.5

    def test_level_failure_is_wrapped(self, monkeypatch):
        def failing(*args, **kwargs):
            raise SolverError("Conjugate gradients did not converge", residual=1e-3, iterations=7)

        monkeypatch.setattr("vem.study.solve_problem", failing)
        family = MeshFamilyConfig(family=MeshFamily.CUBE, levels=[1, 2, 3])
        with pytest.raises(StudyError) as info:
            ConvergenceStudy().run(family, 1)
        assert info.value.level == 0
        assert isinstance(info.value.__cause__, SolverError)


class TestReports:
    """CSV, Markdown and JSON outputs of a study."""

    @pytest.fixture
    def report(self):
        records = [make_record(i, n, 1.0 / n) for i, n in enumerate([2, 4, 8])]
        h = [r.h_max for r in records]
        return ErrorReport(
            family=MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4, 8]),
            k=1, problem="sinsinsin", variant=StabilizationVariant.NEW, records=records,
            rates={name: fit_rate(h, [getattr(r, name) for r in records], expected)
                   for name, expected in [("energy_err", 1.0), ("h1_err", 1.0), ("l2_err", 2.0)]},
        )

    def test_write_reports(self, report, tmp_path):
        paths = write_reports(report, tmp_path / "results")
        assert paths["csv"].name == "study_cube_k1_new.csv"
        with open(paths["csv"], newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == CSV_COLUMNS
        assert len(rows) == 4
        assert float(rows[2][CSV_COLUMNS.index("energy_err")]) == pytest.approx(0.25)
        data = json.loads(paths["json"].read_text())
        assert data["rates"]["energy_err"]["rate"] == pytest.approx(1.0)
        assert "| energy_err |" in paths["md"].read_text()

    def test_custom_stem(self, report, tmp_path):
        paths = write_reports(report, tmp_path, stem="run")
        assert sorted(p.name for p in paths.values()) == ["run.csv", "run.json", "run.md"]

    def test_markdown_flags_non_asymptotic(self, report):
        report.non_asymptotic = True
        assert "not in the asymptotic range" in format_markdown(report)

    def test_levels_must_refine(self):
        records = [make_record(0, 4, 0.25), make_record(1, 2, 0.5)]
        with pytest.raises(ValueError):
            ErrorReport(family=MeshFamilyConfig(family=MeshFamily.CUBE, levels=[2, 4]), k=1,
                        problem="sinsinsin", variant=StabilizationVariant.NEW, records=records)
