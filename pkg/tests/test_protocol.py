import numpy as np
import pytest

from iodkit.geometry import BoundingBox
from iodkit.ingestion import Annotation, Dataset, ImageInfo
from iodkit.protocol import (
    STRICT,
    TRADITIONAL,
    PhasePlan,
    multi_phase_plan,
    plan_manifest,
    strict_split,
    traditional_split,
)


def make_dataset(rng, n_images=40, n_categories=4, max_objects=3):
    images = [ImageInfo(id=i + 1, width=100, height=100) for i in range(n_images)]
    annotations = []
    aid = 1
    for im in images:
        for _ in range(int(rng.integers(0, max_objects + 1))):
            annotations.append(
                Annotation(
                    id=aid,
                    image_id=im.id,
                    category=int(rng.integers(0, n_categories)),
                    box=BoundingBox(0.5, 0.5, 0.2, 0.2),
                    area_px=400.0,
                    bbox_px=(40.0, 40.0, 20.0, 20.0),
                )
            )
            aid += 1
    names = [f"cat{i}" for i in range(n_categories)]
    return Dataset(images=images, annotations=annotations, category_names=names, category_map={i: i for i in range(n_categories)})


class TestMultiPhasePlan:
    def test_seventy_ten(self):
        plan = multi_phase_plan("70+10", 80, seed=0)
        assert plan.n_phases == 2
        assert plan.sample_fractions == (0.875, 0.125)
        assert len(plan.category_partition[0]) == 70
        assert len(plan.category_partition[1]) == 10
        plan.validate(80)

    def test_forty_twenty_x2(self):
        plan = multi_phase_plan("40+20x2", 80, seed=1)
        assert plan.n_phases == 3
        assert plan.sample_fractions == (0.5, 0.25, 0.25)

    def test_forty_ten_x4(self):
        plan = multi_phase_plan("40+10x4", 80, seed=2)
        assert plan.n_phases == 5
        assert plan.sample_fractions == (0.5, 0.125, 0.125, 0.125, 0.125)

    def test_malformed_setup(self):
        with pytest.raises(ValueError, match="malformed setup"):
            multi_phase_plan("70&10", 80, seed=0)

    def test_wrong_category_total(self):
        with pytest.raises(ValueError, match="covers"):
            multi_phase_plan("70+10", 81, seed=0)

    def test_seeded_category_shuffle(self):
        a = multi_phase_plan("6+2", 8, seed=5)
        b = multi_phase_plan("6+2", 8, seed=5)
        c = multi_phase_plan("6+2", 8, seed=6)
        assert a.category_partition == b.category_partition
        assert a.category_partition != c.category_partition


class TestStrictSplit:
    def test_single_phase_everything(self):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng)
        plan = PhasePlan(((0, 1, 2, 3),), STRICT, seed=0, sample_fractions=(1.0,))
        phases = strict_split(ds, plan)
        assert len(phases) == 1
        assert sorted(phases[0].image_ids()) == sorted(ds.image_ids())
        assert len(phases[0].annotations) == len(ds.annotations)

    def test_disjoint_and_covering(self):
        rng = np.random.default_rng(1)
        ds = make_dataset(rng, n_images=50)
        plan = multi_phase_plan("2+1x2", 4, seed=3)
        phases = strict_split(ds, plan)
        seen = []
        for p in phases:
            ids = set(p.image_ids())
            for q in seen:
                assert not ids & q
            seen.append(ids)
        assert set().union(*seen) == set(ds.image_ids())

    def test_fraction_sizes_with_remainder(self):
        rng = np.random.default_rng(2)
        ds = make_dataset(rng, n_images=41)
        plan = PhasePlan(((0, 1, 2), (3,)), STRICT, seed=0, sample_fractions=(0.875, 0.125))
        phases = strict_split(ds, plan)
        assert len(phases[0].images) == 35  # floor(0.875 * 41)
        assert len(phases[1].images) == 6  # remainder

    def test_annotations_respect_categories(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng)
        plan = multi_phase_plan("2+2", 4, seed=1)
        for p in strict_split(ds, plan):
            assert all(a.category in set(p.categories) for a in p.annotations)

    def test_empty_annotation_images_kept(self):
        images = [ImageInfo(1, 10, 10), ImageInfo(2, 10, 10)]
        anns = [
            Annotation(1, 1, 0, BoundingBox(0.5, 0.5, 0.2, 0.2), 4.0, (4.0, 4.0, 2.0, 2.0)),
        ]
        ds = Dataset(images, anns, ["a", "b"], {0: 0, 1: 1})
        plan = PhasePlan(((1,), (0,)), STRICT, seed=0, sample_fractions=(0.5, 0.5))
        phases = strict_split(ds, plan)
        assert sum(len(p.images) for p in phases) == 2
        # whichever phase got image 1 may have zero annotations; it stays
        assert all(len(p.images) >= 1 for p in phases)

    def test_seed_determinism(self):
        rng = np.random.default_rng(4)
        ds = make_dataset(rng)
        plan = multi_phase_plan("2+2", 4, seed=9)
        a = strict_split(ds, plan)
        b = strict_split(ds, plan)
        assert [p.image_ids() for p in a] == [p.image_ids() for p in b]

    def test_empty_dataset_rejected(self):
        ds = Dataset([], [], ["a"], {0: 0})
        plan = PhasePlan(((0,),), STRICT, seed=0, sample_fractions=(1.0,))
        with pytest.raises(ValueError, match="empty dataset"):
            strict_split(ds, plan)


class TestTraditionalSplit:
    def test_overlap_allowed(self):
        images = [ImageInfo(1, 10, 10), ImageInfo(2, 10, 10), ImageInfo(3, 10, 10)]
        anns = [
            Annotation(1, 1, 0, BoundingBox(0.3, 0.3, 0.2, 0.2), 4.0, (2.0, 2.0, 2.0, 2.0)),
            Annotation(2, 1, 1, BoundingBox(0.7, 0.7, 0.2, 0.2), 4.0, (6.0, 6.0, 2.0, 2.0)),
            Annotation(3, 2, 0, BoundingBox(0.5, 0.5, 0.2, 0.2), 4.0, (4.0, 4.0, 2.0, 2.0)),
        ]
        ds = Dataset(images, anns, ["a", "b"], {0: 0, 1: 1})
        plan = PhasePlan(((0,), (1,)), TRADITIONAL, seed=0, sample_fractions=None)
        phases = traditional_split(ds, plan)
        assert phases[0].image_ids() == [1, 2]
        assert phases[1].image_ids() == [1]  # image 1 appears in both phases
        # image 3 has no annotations at all and appears in no phase
        assert 3 not in phases[0].image_ids() + phases[1].image_ids()

    def test_every_annotation_in_exactly_one_phase(self):
        rng = np.random.default_rng(5)
        ds = make_dataset(rng)
        plan = multi_phase_plan("2+2", 4, seed=2, mode=TRADITIONAL)
        phases = traditional_split(ds, plan)
        seen_ids = [a.id for p in phases for a in p.annotations]
        assert sorted(seen_ids) == sorted(a.id for a in ds.annotations)
        union_cats = set().union(*(set(p.categories) for p in phases))
        assert union_cats == set(range(4))


class TestManifest:
    def test_manifest_shape(self):
        rng = np.random.default_rng(6)
        ds = make_dataset(rng)
        plan = multi_phase_plan("2+2", 4, seed=0)
        phases = strict_split(ds, plan)
        doc = plan_manifest(plan, phases)
        assert doc["mode"] == STRICT
        assert doc["seed"] == 0
        assert len(doc["phases"]) == 2
        assert set(doc["phases"][0]) == {"categories", "images"}
