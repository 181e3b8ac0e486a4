"""
Desk-scale sweep over the five awareness ratios (minutes; run with -m slow).
"""
import math

import pytest

from raresim.config import RareSimConfig
from raresim.experiment import run_sweep


@pytest.mark.slow
class TestTableSignature:
    @pytest.fixture(scope="class")
    def table(self):
        return run_sweep(RareSimConfig().validate())

    def test_estimate_falls_with_awareness(self, table):
        rho = table.spearman("ips")
        assert rho is not None and rho <= -0.8

    def test_estimators_agree_at_smallest_ratio(self, table):
        ips, mc = (table.method_rows(m)[0] for m in ("ips", "mc"))
        combined = math.sqrt(ips.stderr ** 2 + mc.stderr ** 2)
        assert abs(ips.gamma_hat - mc.gamma_hat) <= 3 * combined

    def test_splitting_sees_what_monte_carlo_misses(self, table):
        ips, mc = (table.method_rows(m)[-1] for m in ("ips", "mc"))
        assert mc.gamma_hat == 0.0
        assert ips.gamma_hat > 0.0
