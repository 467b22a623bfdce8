import math

import numpy as np
import pytest

from conic_bench import (
    aggregate_morphology,
    best_alignment_metric,
    morphology_from_contour,
    region_properties,
)
from conic_bench.errors import DisconnectedMask, EmptyMask, InvariantViolation
from conic_bench.morphology import MorphologyFeatures


def disk_mask(radius: int, pad: int = 4) -> np.ndarray:
    size = 2 * (radius + pad) + 1
    c = size // 2
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return (rr - c) ** 2 + (cc - c) ** 2 <= radius ** 2


def ellipse_mask(a: float, b: float, theta: float = 0.0, pad: int = 4) -> np.ndarray:
    half = int(max(a, b)) + pad
    size = 2 * half + 1
    c = size // 2
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    dy = rr - c
    dx = cc - c
    u = (dx * math.cos(theta) + dy * math.sin(theta)) / a
    v = (-dx * math.sin(theta) + dy * math.cos(theta)) / b
    return u * u + v * v <= 1.0


class TestRegionProperties:
    def test_solid_square(self):
        mask = np.zeros((14, 14), dtype=bool)
        mask[2:12, 2:12] = True
        feats = region_properties(mask, mpp=0.5)
        assert feats.area_um2 == pytest.approx(25.0)
        assert feats.eccentricity == pytest.approx(0.0, abs=1e-12)
        assert feats.major_axis_um == pytest.approx(feats.minor_axis_um)
        # uniform-density square of side 10 px: axis length 4*sqrt(100/12)
        assert feats.major_axis_um == pytest.approx(4 * math.sqrt(100 / 12) * 0.5)

    def test_disk(self):
        feats = region_properties(disk_mask(20), mpp=1.0)
        assert abs(feats.area_um2 - math.pi * 400) / (math.pi * 400) < 0.02
        assert feats.eccentricity < 0.05

    def test_axis_aligned_ellipse(self):
        feats = region_properties(ellipse_mask(20, 10), mpp=1.0)
        assert feats.eccentricity == pytest.approx(math.sqrt(1 - 0.25), abs=0.02)
        assert feats.major_axis_um / feats.minor_axis_um == pytest.approx(2.0, rel=0.03)

    def test_scale_covariance_exact(self):
        mask = ellipse_mask(13, 7, theta=0.4)
        base = region_properties(mask, mpp=0.5)
        doubled = region_properties(mask, mpp=1.0)
        assert doubled.area_um2 == pytest.approx(4 * base.area_um2, rel=1e-12)
        assert doubled.perimeter_um == pytest.approx(2 * base.perimeter_um, rel=1e-12)
        assert doubled.major_axis_um == pytest.approx(2 * base.major_axis_um, rel=1e-12)
        assert doubled.minor_axis_um == pytest.approx(2 * base.minor_axis_um, rel=1e-12)
        assert doubled.eccentricity == base.eccentricity

    def test_rotation_tolerance(self):
        base = region_properties(ellipse_mask(20, 10), mpp=1.0)
        rotated = region_properties(ellipse_mask(20, 10, theta=math.radians(30)), mpp=1.0)
        assert abs(base.eccentricity - rotated.eccentricity) < 0.03

    def test_major_at_least_minor_random_blobs(self, rng):
        for _ in range(30):
            a = float(rng.uniform(4, 18))
            b = float(rng.uniform(4, 18))
            theta = float(rng.uniform(0, math.pi))
            feats = region_properties(ellipse_mask(a, b, theta), mpp=1.0)
            assert feats.major_axis_um >= feats.minor_axis_um > 0

    def test_isoperimetric_on_thick_masks(self, rng):
        # rasterization tolerance: masks at least ~8 px across
        for _ in range(25):
            a = float(rng.uniform(5, 25))
            b = float(rng.uniform(5, 25))
            theta = float(rng.uniform(0, math.pi))
            feats = region_properties(ellipse_mask(a, b, theta), mpp=1.0)
            assert feats.perimeter_um ** 2 >= 4 * math.pi * feats.area_um2 * 0.95

    def test_single_pixel_has_positive_axes(self):
        feats = region_properties(np.ones((1, 1), dtype=bool), mpp=1.0)
        assert feats.minor_axis_um > 0

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            region_properties(np.zeros((4, 4), dtype=bool), mpp=1.0)

    def test_disconnected_mask(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[0, 0] = mask[4, 4] = True  # diagonal touch only at distance > 1
        mask2 = np.zeros((5, 5), dtype=bool)
        mask2[0, 0] = mask2[0, 3] = True
        with pytest.raises(DisconnectedMask):
            region_properties(mask2, mpp=1.0)


class TestBestAlignmentMetric:
    def test_ellipse_aligns_with_itself(self):
        assert best_alignment_metric(ellipse_mask(18, 9, theta=0.7)) < 0.05

    def test_disk_aligns(self):
        assert best_alignment_metric(disk_mask(15)) < 0.05

    def test_cross_worse_than_disk(self):
        cross = np.zeros((41, 41), dtype=bool)
        cross[18:23, 2:39] = True
        cross[2:39, 18:23] = True
        disk_bam = best_alignment_metric(disk_mask(10))
        assert best_alignment_metric(cross) > disk_bam

    def test_bounds(self, rng):
        for _ in range(20):
            a = float(rng.uniform(3, 15))
            b = float(rng.uniform(3, 15))
            bam = best_alignment_metric(ellipse_mask(a, b, float(rng.uniform(0, 3))))
            assert 0.0 <= bam <= 1.0

    def test_rotation_tolerance(self):
        base = best_alignment_metric(ellipse_mask(20, 10))
        rotated = best_alignment_metric(ellipse_mask(20, 10, theta=math.radians(30)))
        assert abs(base - rotated) < 0.05


class TestContourRoute:
    def test_square_polygon(self):
        contour = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
        feats = morphology_from_contour(contour)
        assert feats.area_um2 == pytest.approx(100.0)
        assert feats.perimeter_um == pytest.approx(40.0)
        assert feats.eccentricity == pytest.approx(0.0, abs=1e-9)
        assert feats.major_axis_um == pytest.approx(4 * math.sqrt(100 / 12))
        assert 0.05 < feats.bam < 0.25  # a square is detectably non-elliptical

    def test_ellipse_polygon(self):
        t = np.linspace(0, 2 * math.pi, 160, endpoint=False)
        contour = np.stack([8 * np.cos(t), 4 * np.sin(t)], axis=1) + 50.0
        feats = morphology_from_contour(contour)
        assert feats.eccentricity == pytest.approx(math.sqrt(1 - 0.25), abs=0.01)
        assert feats.major_axis_um == pytest.approx(16.0, rel=0.01)
        assert feats.minor_axis_um == pytest.approx(8.0, rel=0.01)
        assert feats.bam < 0.02

    def test_matches_mask_route_on_disk(self):
        mask = disk_mask(20)
        mask_feats = region_properties(mask, mpp=1.0)
        t = np.linspace(0, 2 * math.pi, 256, endpoint=False)
        contour = np.stack([20 * np.cos(t), 20 * np.sin(t)], axis=1)
        poly_feats = morphology_from_contour(contour)
        assert poly_feats.area_um2 == pytest.approx(mask_feats.area_um2, rel=0.05)
        assert poly_feats.major_axis_um == pytest.approx(mask_feats.major_axis_um, rel=0.05)


class TestAggregateMorphology:
    def _feat(self, area, ecc=0.5, perim=10.0, minor=2.0, major=4.0, bam=0.1):
        return MorphologyFeatures(area_um2=area, eccentricity=ecc, perimeter_um=perim,
                                  major_axis_um=major, minor_axis_um=minor, bam=bam)

    def test_no_nuclei_all_missing(self):
        out = aggregate_morphology([], [])
        assert out.shape == (72,)
        assert np.isnan(out).all()

    def test_single_connective_nucleus(self):
        out = aggregate_morphology(["connective"], [self._feat(25.0)])
        assert out[0] == 25.0   # Average Connective's area
        assert out[1] == 0.0    # std of one sample
        assert np.isnan(out[12:]).all()  # every other class missing

    def test_two_epithelial_nuclei(self):
        out = aggregate_morphology(
            ["epithelial", "epithelial"], [self._feat(10.0), self._feat(20.0)])
        # epithelial block starts at id 24
        assert out[24] == pytest.approx(15.0)
        assert out[25] == pytest.approx(5.0)  # population std

    def test_minor_then_major_order(self):
        out = aggregate_morphology(["connective"], [self._feat(25.0, minor=2.0, major=4.0)])
        assert out[6] == 2.0  # first axis pair = minor
        assert out[8] == 4.0  # second axis pair = major

    def test_permutation_invariance(self, rng):
        classes = ["plasma", "epithelial", "plasma", "lymphocyte", "plasma"]
        feats = [self._feat(float(a)) for a in rng.uniform(5, 50, size=5)]
        base = aggregate_morphology(classes, feats)
        order = rng.permutation(5)
        shuffled = aggregate_morphology([classes[i] for i in order],
                                        [feats[i] for i in order])
        assert np.allclose(base[~np.isnan(base)], shuffled[~np.isnan(shuffled)])
        assert np.array_equal(np.isnan(base), np.isnan(shuffled))


def test_morphology_features_invariants():
    with pytest.raises(InvariantViolation):
        MorphologyFeatures(area_um2=1, eccentricity=0.5, perimeter_um=1,
                           major_axis_um=1.0, minor_axis_um=2.0)
    with pytest.raises(InvariantViolation):
        MorphologyFeatures(area_um2=1, eccentricity=1.2, perimeter_um=1,
                           major_axis_um=2.0, minor_axis_um=1.0)
    with pytest.raises(InvariantViolation):
        MorphologyFeatures(area_um2=1, eccentricity=0.2, perimeter_um=1,
                           major_axis_um=2.0, minor_axis_um=1.0, bam=1.5)
