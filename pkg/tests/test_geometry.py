"""Tests for coordinate transforms and distance binning."""

import numpy as np
import pytest

from foveal_explorer.errors import ContractError
from foveal_explorer.geometry import DistanceBinning, GazeState, bin_of, fovea_distance, to_local


class TestLocalCoordinates:
    def test_identity_at_fovea(self):
        g = GazeState((10.0, 10.0))
        assert to_local((10.0, 10.0), g) == (0.0, 0.0)

    def test_direct_subtraction(self):
        g = GazeState((10.0, 10.0))
        assert to_local((13.0, 14.0), g) == (3.0, 4.0)

    def test_round_trip(self):
        g = GazeState((42.5, 17.25))
        u, v = to_local((100.0, 3.0), g)
        assert (u + g.fixation[0], v + g.fixation[1]) == (100.0, 3.0)


class TestFoveaDistance:
    def test_zero_at_fixation(self):
        assert fovea_distance((5.0, 5.0), GazeState((5.0, 5.0))) == 0.0

    def test_3_4_5_triangle(self):
        assert fovea_distance((13.0, 14.0), GazeState((10.0, 10.0))) == pytest.approx(5.0)

    def test_norm_symmetry(self):
        g = GazeState((0.0, 0.0))
        assert fovea_distance((3.0, -7.0), g) == fovea_distance((-3.0, 7.0), g)

    def test_translation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            p = rng.uniform(-100, 100, 2)
            f = rng.uniform(-100, 100, 2)
            t = rng.uniform(-100, 100, 2)
            d1 = fovea_distance(tuple(p), GazeState(tuple(f)))
            d2 = fovea_distance(tuple(p + t), GazeState(tuple(f + t)))
            assert d1 == pytest.approx(d2)

    def test_vectorized_points(self):
        g = GazeState((1.0, 2.0))
        pts = np.array([[1.0, 2.0], [4.0, 6.0]])
        np.testing.assert_allclose(fovea_distance(pts, g), [0.0, 5.0])


class TestBinning:
    def test_uniform_construction(self):
        b = DistanceBinning.uniform(7, 70.0)
        np.testing.assert_allclose(b.edges, [10, 20, 30, 40, 50, 60, 70])
        assert b.num_bins == 7

    def test_zero_distance_maps_to_first_bin(self):
        b = DistanceBinning.uniform(7, 70.0)
        assert bin_of(0.0, b) == 0

    def test_beyond_last_edge_clamps(self):
        b = DistanceBinning.uniform(7, 70.0)
        assert bin_of(170.0, b) == 6

    def test_quarter_diagonal_lands_mid_bin(self):
        # Uniform bins over [0, D/2]: a distance of D/4 sits in bin
        # ceil(num_bins / 2) - 1.
        diag = 200.0
        b = DistanceBinning.uniform(7, diag / 2)
        assert bin_of(diag / 4, b) == int(np.ceil(7 / 2)) - 1

    def test_monotone_in_distance(self):
        b = DistanceBinning.uniform(5, 50.0)
        ds = np.linspace(0.0, 120.0, 500)
        bins = bin_of(ds, b)
        assert np.all(np.diff(bins) >= 0)

    def test_for_image_covers_half_diagonal(self):
        b = DistanceBinning.for_image(640, 480)
        assert b.max_radius == pytest.approx(400.0)

    def test_rejects_bad_edges(self):
        with pytest.raises(ContractError):
            DistanceBinning(np.array([10.0, 10.0, 20.0]))
        with pytest.raises(ContractError):
            DistanceBinning(np.array([0.0, 10.0]))
        with pytest.raises(ContractError):
            bin_of(-1.0, DistanceBinning.uniform(3, 30.0))
