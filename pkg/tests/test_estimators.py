import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lorp.estimators import LorpPlanner, SpectralLayerClustering
from lorp.synth import PlantedSpec, generate_similarity

from oracles import random_symmetric_similarity


def planted_matrix(n=8, within=0.9, cross=0.1, noise=0.02, seed=0):
    half = n // 2
    spec = PlantedSpec(
        n_layers=n,
        d_model=8,
        cluster_layout=(tuple(range(1, half + 1)), tuple(range(half + 1, n + 1))),
        within_similarity=within,
        cross_similarity=cross,
        noise_scale=noise,
        seed=seed,
    )
    return generate_similarity(spec)


class TestSpectralLayerClustering:
    def test_fit_predict_recovers_blocks(self):
        est = SpectralLayerClustering(n_clusters=2, random_state=0)
        labels = est.fit_predict(planted_matrix())
        assert labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]

    def test_get_params_roundtrip(self):
        est = SpectralLayerClustering(n_clusters=3, random_state=7)
        params = est.get_params()
        assert params == {"n_clusters": 3, "random_state": 7}
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_partition_attribute_is_one_based(self):
        est = SpectralLayerClustering(n_clusters=2).fit(planted_matrix())
        assert min(min(c) for c in est.partition_.clusters) == 1
        assert est.labels_.min() == 0

    def test_rejects_invalid_input(self, rng):
        est = SpectralLayerClustering(n_clusters=2)
        with pytest.raises(ValueError):
            est.fit(rng.normal(size=(4, 5)))


class TestLorpPlanner:
    def test_fit_produces_plan(self):
        planner = LorpPlanner(budget=2, n_clusters=2).fit(planted_matrix())
        assert len(planner.pruned_layers_) == 2
        assert 1 not in planner.pruned_layers_
        assert 8 not in planner.pruned_layers_
        assert planner.plan_.method == "lorp"
        assert planner.partition_.k == 2

    def test_auto_k_uses_locality_policy(self):
        matrix = planted_matrix()
        planner = LorpPlanner(budget=2, n_clusters="auto").fit(matrix)
        assert planner.partition_.k == planner.locality_.recommended_k

    def test_transform_drops_pruned_axis(self, rng):
        planner = LorpPlanner(budget=3, n_clusters=2).fit(planted_matrix())
        activations = rng.normal(size=(10, 8, 4))
        reduced = planner.transform(activations)
        assert reduced.shape == (10, 5, 4)
        kept = planner.get_support(indices=True)
        assert np.array_equal(reduced, activations[:, kept])

    def test_transform_requires_fit(self):
        with pytest.raises(NotFittedError):
            LorpPlanner(budget=2).transform(np.zeros((3, 8)))

    def test_contiguous_method(self):
        planner = LorpPlanner(budget=2, method="contiguous").fit(planted_matrix())
        a, b = planner.pruned_layers_
        assert b == a + 1
        assert planner.partition_ is None

    def test_deterministic_across_fits(self, rng):
        s = random_symmetric_similarity(rng, 10)
        a = LorpPlanner(budget=3, n_clusters=3, random_state=5).fit(s)
        b = LorpPlanner(budget=3, n_clusters=3, random_state=5).fit(s)
        assert a.pruned_layers_ == b.pruned_layers_
        assert a.plan_.to_json_dict() == b.plan_.to_json_dict()

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            LorpPlanner(budget=2, method="mystery").fit(planted_matrix())

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            LorpPlanner(budget=0).fit(planted_matrix())
        with pytest.raises(ValueError):
            LorpPlanner(budget=7).fit(planted_matrix())  # 8 layers -> max 6
