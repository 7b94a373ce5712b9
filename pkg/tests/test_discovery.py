import math

import numpy as np
import pytest

from oracles import adjusted_rand_index
from unsupseg.discovery import (build_cluster_report, filter_uncertain,
                                synthesize_pseudo_masks)
from unsupseg.graph import build_knn_affinity
from unsupseg.kmeans import ClusterModel, cluster_kmeans
from unsupseg.proposals import BBox, ProposalRecord
from unsupseg.spectral import spectral_embed


def model_with(distances, assignments, k=None):
    distances = np.asarray(distances, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    k = k or int(assignments.max()) + 1
    return ClusterModel(assignments=assignments,
                        centroids=np.zeros((k, 2)),
                        distances=distances,
                        inertia=float(np.sum(distances ** 2)))


class TestFilterUncertain:
    def test_cluster_of_10_drops_two_largest(self):
        distances = np.array([0.1, 0.9, 0.2, 0.8, 0.3, 0.4, 0.5, 0.6, 0.7, 0.05])
        model = model_with(distances, np.zeros(10))
        kept = filter_uncertain(model, p=0.2)
        assert len(kept) == 8
        dropped = sorted(set(range(10)) - set(kept.tolist()))
        assert dropped == [1, 3]  # distances 0.9 and 0.8

    def test_p_zero_is_identity(self):
        model = model_with([3.0, 1.0, 2.0], [0, 0, 1])
        assert filter_uncertain(model, p=0.0).tolist() == [0, 1, 2]

    def test_singleton_cluster_emptied_and_flagged(self):
        model = model_with([0.5, 0.1, 0.2], [0, 1, 1])
        kept = filter_uncertain(model, p=0.2)
        assert 0 not in kept.tolist()  # ceil(0.2 * 1) = 1 dropped
        rows = build_cluster_report(model, kept)
        assert rows[0]["emptied"] is True
        assert rows[0]["dropped_ids"] == [0]
        assert rows[1]["emptied"] is False

    def test_ties_drop_higher_index_first(self):
        model = model_with([0.5, 0.5, 0.5, 0.5, 0.1], np.zeros(5))
        kept = filter_uncertain(model, p=0.2)  # ceil(1) = 1 dropped
        assert kept.tolist() == [0, 1, 2, 4]  # index 3 dropped among the ties

    @pytest.mark.parametrize("p", [0.2, 0.3, 0.4])
    def test_counts_and_order_statistics(self, p):
        rng = np.random.default_rng(17)
        assignments = rng.integers(0, 4, 100)
        distances = rng.random(100)
        model = model_with(distances, assignments, k=4)
        kept = filter_uncertain(model, p=p)
        kept_set = set(kept.tolist())
        for cid in range(4):
            members = np.nonzero(assignments == cid)[0]
            kept_members = [i for i in members if i in kept_set]
            dropped = [i for i in members if i not in kept_set]
            assert len(kept_members) == members.size - math.ceil(p * members.size)
            if kept_members and dropped:
                assert min(distances[dropped]) >= max(distances[kept_members])

    def test_invalid_fraction(self):
        model = model_with([0.1], [0])
        with pytest.raises(ValueError):
            filter_uncertain(model, p=1.0)


def proposal(image_id, mask):
    mask = np.asarray(mask, dtype=np.uint8)
    ys, xs = np.nonzero(mask)
    box = BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return ProposalRecord(image_id=image_id, binary_mask=mask, bbox=box,
                          area_fraction=float(mask.sum() / mask.size))


class TestSynthesize:
    def test_paints_cluster_id_plus_one(self):
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[1, 1] = mask[1, 2] = mask[2, 1] = mask[2, 2] = 1
        out = synthesize_pseudo_masks([proposal("a", mask)],
                                      np.array([2]), np.array([0]))
        values, counts = np.unique(out["a"], return_counts=True)
        assert values.tolist() == [0, 3]
        assert counts.tolist() == [5, 4]

    def test_filtered_out_image_absent(self):
        mask = np.ones((2, 2), dtype=np.uint8)
        out = synthesize_pseudo_masks(
            [proposal("a", mask), proposal("b", mask)],
            np.array([0, 1]), np.array([1]))
        assert set(out) == {"b"}

    def test_histogram_matches_mask(self):
        rng = np.random.default_rng(23)
        mask = (rng.random((8, 8)) < 0.4).astype(np.uint8)
        mask[0, 0] = 1
        out = synthesize_pseudo_masks([proposal("x", mask)],
                                      np.array([4]), np.array([0]))
        fg = int(mask.sum())
        values, counts = np.unique(out["x"], return_counts=True)
        assert dict(zip(values.tolist(), counts.tolist())) == {0: 64 - fg, 5: fg}


def test_planted_gaussians_end_to_end_recovery():
    rng = np.random.default_rng(5)
    dim = 8
    sigma = 0.3
    centers = rng.standard_normal((3, dim)) * 0.0
    centers[0, 0] = centers[1, 1] = centers[2, 2] = 10.0 * sigma * math.sqrt(dim)
    points, truth = [], []
    for idx in range(3):
        points.append(centers[idx] + sigma * rng.standard_normal((50, dim)))
        truth += [idx] * 50
    points = np.vstack(points)
    graph = build_knn_affinity(points, k=10)
    emb = spectral_embed(graph, d=3)
    model = cluster_kmeans(emb, n_clusters=3, seed=0)
    assert adjusted_rand_index(model.assignments, truth) == 1.0
