#!/usr/bin/env python3
"""
Test spatial references and alert rendering
"""
import math
import unittest
import sys
import os

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np

from src.exceptions import InputError
from src.geo_alert import (SUGGESTIONS, SpatialReference, alert_stream, compass_direction, link_risk_peak, locate,
                           render_alert, sector_for)
from src.risk_head import RiskTrace
from src.scenario_sim import generate
from src.tensor_kernel import Rng

MIRRORED = {
    'ahead': 'ahead', 'behind': 'behind',
    'front-left': 'front-right', 'front-right': 'front-left',
    'left': 'right', 'right': 'left',
    'left blind spot': 'right blind spot', 'right blind spot': 'left blind spot',
}


class TestLocate(unittest.TestCase):
    """Ego-relative distance, bearing and sector"""

    def test_straight_ahead(self):
        ref = locate(0.0, 5.0)
        self.assertEqual((ref.distance_m, ref.bearing_deg, ref.sector), (5.0, 0.0, 'ahead'))

    def test_left_blind_spot(self):
        ref = locate(-1.819, -1.050)
        self.assertEqual(ref.distance_m, 2.1)
        self.assertAlmostEqual(ref.bearing_deg, -120.0, delta=0.01)
        self.assertEqual(ref.sector, 'left blind spot')

    def test_left_side(self):
        ref = locate(-2.068, -0.365)
        self.assertEqual(ref.distance_m, 2.1)
        self.assertAlmostEqual(ref.bearing_deg, -100.0, delta=0.01)
        self.assertEqual(ref.sector, 'left')

    def test_directly_behind(self):
        ref = locate(0.0, -3.0)
        self.assertEqual(ref.bearing_deg, 180.0)
        self.assertEqual(ref.sector, 'behind')
        self.assertEqual(locate(-0.0, -3.0).bearing_deg, 180.0)

    def test_mirror_symmetry(self):
        rng = Rng(1)
        for x, z in rng.uniform(-20.0, 20.0, size=(200, 2)):
            self.assertEqual(MIRRORED[locate(x, z).sector], locate(-x, z).sector)

    def test_polar_round_trip(self):
        rng = Rng(2)
        for _ in range(1000):
            distance = rng.uniform(0.5, 60.0)
            bearing = rng.uniform(-179.0, 179.0)
            x = distance * math.sin(math.radians(bearing))
            z = distance * math.cos(math.radians(bearing))
            ref = locate(x, z)
            self.assertLessEqual(abs(ref.distance_m - distance), 0.05 + 1e-9)
            self.assertLessEqual(abs(ref.bearing_deg - bearing), 1e-9)

    def test_invalid(self):
        with self.assertRaises(InputError):
            locate(0.0, 0.0)
        with self.assertRaises(InputError):
            locate(float('nan'), 1.0)


class TestSectors(unittest.TestCase):
    """Sector bins partition the circle"""

    def test_boundaries(self):
        expected = {
            -150.0: 'behind', -149.9: 'left blind spot', -105.0: 'left blind spot', -104.9: 'left',
            -75.0: 'left', -74.9: 'front-left', -15.0: 'ahead', 15.0: 'ahead', 15.1: 'front-right',
            75.0: 'front-right', 75.1: 'right', 105.0: 'right', 105.1: 'right blind spot',
            150.0: 'right blind spot', 150.1: 'behind', 180.0: 'behind',
        }
        for bearing, sector in expected.items():
            self.assertEqual(sector_for(bearing), sector, bearing)

    def test_dense_grid_covers_every_sector(self):
        bearings = np.linspace(-179.99, 180.0, 36000)
        seen = {sector_for(float(b)) for b in bearings}
        self.assertEqual(seen, set(SUGGESTIONS))

    def test_outside_range(self):
        with self.assertRaises(InputError):
            sector_for(-180.0)
        with self.assertRaises(InputError):
            sector_for(181.0)


class TestRenderAlert(unittest.TestCase):
    """Alert text templates"""

    def setUp(self):
        self.blind_spot = locate(-1.819, -1.050)

    def test_golden_ego_alert(self):
        text = render_alert('pedestrian', self.blind_spot, 0.62, 0.47)
        self.assertEqual(text, "Pedestrian 2.1m in left blind spot — risk 0.62 above threshold 0.47")

    def test_not_triggered(self):
        self.assertIsNone(render_alert('pedestrian', self.blind_spot, 0.47, 0.47))
        self.assertIsNone(render_alert('pedestrian', self.blind_spot, 0.30, 0.47))

    def test_describe_without_trigger(self):
        text = render_alert('cyclist', self.blind_spot, 0.30, 0.47, triggered=False)
        self.assertEqual(text, "Cyclist 2.1m in left blind spot")

    def test_compass(self):
        ref = SpatialReference(12.0, 45.0, 'front-right')
        self.assertEqual(compass_direction(45.0), 'northeast')
        self.assertEqual(compass_direction(0.0, heading=180.0), 'south')
        self.assertEqual(compass_direction(-100.0, heading=90.0), 'north')
        self.assertEqual(render_alert('car', ref, 0.8, 0.5, mode='compass'),
                         "Car 12.0m to the northeast — risk 0.80 above threshold 0.50")

    def test_suggestion(self):
        text = render_alert('pedestrian', self.blind_spot, 0.62, 0.47, suggest=True)
        self.assertTrue(text.endswith("; check left mirror before changing lanes"))

    def test_unknown_mode(self):
        with self.assertRaises(InputError):
            render_alert('car', self.blind_spot, 0.9, 0.5, mode='polar')


class TestLinkRiskPeak(unittest.TestCase):
    """Agent nearest to the risk-map argmax"""

    def test_single_agent(self):
        self.assertEqual(link_risk_peak(np.full((8, 8), 1 / 64), [(7, 3.0, 20.0)]), 7)

    def test_agent_on_peak_cell(self):
        risk = np.zeros((8, 8))
        # x = 0.5, z = 20 projects into cell (4, 4) on an 8 x 8 grid
        risk[4, 4] = 1.0
        self.assertEqual(link_risk_peak(risk, [(1, -14.0, 50.0), (2, 0.5, 20.0)]), 2)

    def test_tie_goes_to_smaller_id(self):
        risk = np.zeros((8, 8))
        risk[4, 4] = 1.0
        # rows 4, cols 2 and 6: both two cells from the peak
        self.assertEqual(link_risk_peak(risk, [(5, 9.0, 20.0), (2, -7.0, 20.0)]), 2)

    def test_empty(self):
        with self.assertRaises(InputError):
            link_risk_peak(np.ones((2, 2)), [])


class TestAlertStream(unittest.TestCase):
    """Alerts over a whole sequence"""

    @classmethod
    def setUpClass(cls):
        cls.seq = next(seq for seq in generate(8, 4, 0.5) if seq.label)

    def make_trace(self, p, tau):
        T = self.seq.frames
        return RiskTrace(p=np.full(T, p), risk_maps=np.full((T, 8, 8), 1 / 64), tau=np.full(T, tau),
                         label=True, t_accident=self.seq.t_accident, fps=self.seq.fps)

    def test_triggered_frames_only(self):
        self.assertEqual(alert_stream(self.seq, self.make_trace(0.4, 0.5)), [])
        alerts = alert_stream(self.seq, self.make_trace(0.6, 0.5))
        self.assertTrue(alerts)
        for alert in alerts:
            self.assertIn('above threshold 0.50', alert.text)
            record = alert.to_record()
            self.assertEqual(set(record), {'frame', 'agent_id', 'class', 'distance_m', 'bearing_deg', 'sector',
                                           'p', 'tau', 'text'})

    def test_describe_all(self):
        alerts = alert_stream(self.seq, self.make_trace(0.4, 0.5), describe_all=True)
        self.assertTrue(alerts)
        self.assertNotIn('risk', alerts[0].text)

    def test_deterministic(self):
        trace = self.make_trace(0.6, 0.5)
        first = [alert.to_record() for alert in alert_stream(self.seq, trace, mode='compass', heading=30.0)]
        second = [alert.to_record() for alert in alert_stream(self.seq, trace, mode='compass', heading=30.0)]
        self.assertEqual(first, second)

    def test_frame_mismatch(self):
        trace = RiskTrace(p=np.zeros(3), risk_maps=np.ones((3, 8, 8)), tau=np.zeros(3))
        with self.assertRaises(InputError):
            alert_stream(self.seq, trace)


if __name__ == '__main__':
    unittest.main()
