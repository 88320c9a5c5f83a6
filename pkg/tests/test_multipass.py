import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcmem.core import SpectralGrid
from afcmem.echo import gaussian_probe, propagate, report
from afcmem.errors import ConfigurationError, ValidationError
from afcmem.metrics import gaussian_comb
from afcmem.multipass import OverlapModel, effective_depth, pass_scan
from afcmem.simulator import MemorySimulator, baseline_sequence

from oracles import gaussian_comb_echo


class TestEffectiveDepth:
    def test_single_pass(self):
        assert effective_depth(1, 0.8, 1.7) == pytest.approx(1.7)

    def test_linear_limit(self):
        assert effective_depth(6, 1.0, 1.5) == pytest.approx(9.0)

    def test_geometric_sum(self):
        assert effective_depth(4, 0.8, 1.0) == pytest.approx(2.952)
        assert effective_depth(4, 0.8, 1.0) < 4.0

    def test_rejects_zero_passes(self):
        with pytest.raises(ValidationError):
            effective_depth(0, 0.8, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(gamma=st.floats(0.1, 0.999), m=st.integers(2, 7))
    def test_increasing_and_concave(self, gamma, m):
        d = [effective_depth(k, gamma, 1.0) for k in (m - 1, m, m + 1)]
        assert d[0] < d[1] < d[2]
        assert d[2] - d[1] < d[1] - d[0]


class TestOverlapModel:
    def test_multiplier_and_contrast(self):
        ov = OverlapModel(overlap_factor=0.8, pump_penalty=0.12)
        assert ov.multiplier(1) == 1.0
        assert ov.multiplier(3) == pytest.approx(1 + 0.8 + 0.64)
        assert ov.contrast(1) == 1.0
        assert ov.contrast(4) == pytest.approx(0.88**3)

    @pytest.mark.parametrize(
        "kw",
        [{"overlap_factor": 0.0}, {"overlap_factor": 1.1}, {"pump_penalty": 1.0}, {"background_per_pass": 0.0},
         {"max_passes": 0}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            OverlapModel(**kw)


class SyntheticComb:
    """Stand-in simulator: a fixed Gaussian comb whose depth scales with the pass multiplier."""

    grid = SpectralGrid(span_mhz=400.0, n_bins=2**15)

    def __init__(self, F=3.0, d_single=1.5, d0_single=0.1):
        self.F, self.d, self.d0 = F, d_single, d0_single
        self.probe = gaussian_probe(self.grid, 50.0)

    def comb(self, passes, overlap):
        m = overlap.multiplier(passes)
        return self.d * m * overlap.contrast(passes), self.F, self.d0 * m

    def efficiency(self, seq, passes=1, overlap=None):
        d, F, d0 = self.comb(passes, overlap)
        out = propagate(self.probe, gaussian_comb(self.grid, 5.0, F, d, d0))
        return report(self.probe, out, 5.0).efficiency


class TestPassScan:
    def test_synthetic_comb_follows_comb_law(self):
        stub = SyntheticComb()
        ov = OverlapModel(overlap_factor=1.0, pump_penalty=0.0)
        rows, best = pass_scan(stub, None, range(1, 9), ov)
        decay = math.exp(-2 * 0.2 / 60.0)
        expected = [gaussian_comb_echo(*stub.comb(m, ov)) * decay for m, _ in rows]
        np.testing.assert_allclose([e for _, e in rows], expected, rtol=2e-3)
        assert best == int(np.argmax(expected)) + 1

    def test_rise_then_fall_on_simulator(self):
        sim = MemorySimulator(d_peak=0.5)
        ov = OverlapModel(overlap_factor=1.0, pump_penalty=0.0)
        rows, best = pass_scan(sim, baseline_sequence(), range(1, 9), ov)
        eff = np.array([e for _, e in rows])
        assert np.all(np.diff(eff[:best]) > 0)
        assert np.all(np.diff(eff[best - 1 :]) < 0)

    def test_default_calibration_peaks_at_four(self):
        rows, best = pass_scan(MemorySimulator(), baseline_sequence(), range(1, 9), MemorySimulator().overlap)
        assert best == 4
        assert [m for m, _ in rows] == list(range(1, 9))

    def test_default_overlap_argument(self):
        rows, _ = pass_scan(SyntheticComb(), None, [1, 2])
        assert rows[1][1] > rows[0][1]
