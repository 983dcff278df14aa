import io

import numpy as np
import pytest

from lorp.clustering import spectral_cluster, to_affinity
from lorp.errors import InfeasibleTargetError
from lorp.ladf import read_dump_chunks
from lorp.locality import off_diagonal_mean, rls
from lorp.similarity import SimilarityAccumulator
from lorp.synth import PlantedSpec, generate_dump, generate_similarity
from lorp.validation import invariant_battery


def two_block_spec(n=8, within=0.9, cross=0.1, noise=0.0, seed=0, d=16):
    half = n // 2
    return PlantedSpec(
        n_layers=n,
        d_model=d,
        cluster_layout=(tuple(range(1, half + 1)), tuple(range(half + 1, n + 1))),
        within_similarity=within,
        cross_similarity=cross,
        noise_scale=noise,
        seed=seed,
    )


class TestSpec:
    def test_layout_must_cover(self):
        with pytest.raises(ValueError):
            PlantedSpec(4, 8, ((1, 2), (4,)), 0.9, 0.1)

    def test_within_must_exceed_cross(self):
        with pytest.raises(ValueError):
            PlantedSpec(4, 8, ((1, 2), (3, 4)), 0.5, 0.5)

    def test_json_roundtrip(self, tmp_path):
        spec = two_block_spec()
        path = tmp_path / "spec.json"
        path.write_text(
            '{"n_layers": 8, "d_model": 16, "cluster_layout": [[1,2,3,4],[5,6,7,8]],'
            ' "within_similarity": 0.9, "cross_similarity": 0.1}'
        )
        assert PlantedSpec.from_json(path) == spec


class TestGenerateSimilarity:
    def test_two_block_closed_form(self):
        # 12 within pairs at 0.9 plus 16 cross pairs at 0.1 over 28 total pairs.
        s = generate_similarity(two_block_spec())
        mean = off_diagonal_mean(s)
        assert mean == pytest.approx((12 * 0.9 + 16 * 0.1) / 28, abs=1e-12)
        assert mean == pytest.approx(0.44286, abs=1e-4)
        assert rls(mean) == pytest.approx(1.1752, abs=1e-3)

    def test_equal_targets_rejected_but_flat_profile_nearby(self):
        spec = two_block_spec(within=0.5001, cross=0.5)
        s = generate_similarity(spec)
        off = s.entries[~np.eye(8, dtype=bool)]
        assert off.min() >= 0.5 - 1e-12 and off.max() <= 0.5001 + 1e-12

    def test_emitted_matrix_passes_invariants(self):
        for seed in range(5):
            s = generate_similarity(two_block_spec(noise=0.05, seed=seed))
            assert all(ok for name, ok, _ in invariant_battery(s) if name != "diagonal" or ok)

    def test_interleaved_layout_recovered(self):
        spec = PlantedSpec(
            n_layers=8,
            d_model=16,
            cluster_layout=((1, 3, 5, 7), (2, 4, 6, 8)),
            within_similarity=0.9,
            cross_similarity=0.1,
            noise_scale=0.02,
            seed=11,
        )
        part = spectral_cluster(to_affinity(generate_similarity(spec)), 2, seed=0)
        assert {frozenset(c) for c in part.clusters} == {frozenset(c) for c in spec.cluster_layout}

    def test_deterministic_per_seed(self):
        a = generate_similarity(two_block_spec(noise=0.05, seed=4))
        b = generate_similarity(two_block_spec(noise=0.05, seed=4))
        c = generate_similarity(two_block_spec(noise=0.05, seed=5))
        assert np.array_equal(a.entries, b.entries)
        assert not np.array_equal(a.entries, c.entries)


class TestGenerateDump:
    def test_zero_noise_identical_within_cluster(self):
        spec = two_block_spec(within=1.0, cross=0.1, noise=0.0)
        dump = generate_dump(spec, n_samples=2, tokens_per_sample=8)
        acc = SimilarityAccumulator(8, epsilon=0.0)
        for chunk in dump.chunks:
            acc.add_batch(chunk)
        s = acc.finalize()
        block = s.entries[:4, :4]
        assert np.allclose(block, 1.0, atol=1e-6)

    def test_monte_carlo_hits_targets(self):
        spec = two_block_spec(within=0.9, cross=0.1, d=64, seed=2)
        dump = generate_dump(spec, n_samples=10, tokens_per_sample=1000)
        acc = SimilarityAccumulator(8)
        for chunk in dump.chunks:
            acc.add_batch(chunk)
        s = acc.finalize()
        within_mask = np.zeros((8, 8), dtype=bool)
        within_mask[:4, :4] = True
        within_mask[4:, 4:] = True
        np.fill_diagonal(within_mask, False)
        within_mean = s.entries[within_mask].mean()
        cross_mean = s.entries[~within_mask & ~np.eye(8, dtype=bool)].mean()
        assert within_mean == pytest.approx(0.9, abs=0.03)
        assert cross_mean == pytest.approx(0.1, abs=0.03)

    def test_infeasible_targets_raise(self):
        spec = PlantedSpec(
            n_layers=6,
            d_model=8,
            cluster_layout=((1, 2), (3, 4), (5, 6)),
            within_similarity=0.95,
            cross_similarity=-0.9,
        )
        with pytest.raises(InfeasibleTargetError):
            generate_dump(spec, 1, 4)

    def test_dump_is_valid_ladf(self):
        spec = two_block_spec(seed=6)
        dump = generate_dump(spec, n_samples=3, tokens_per_sample=5)
        buf = io.BytesIO()
        dump.write(buf)
        buf.seek(0)
        header, chunks = read_dump_chunks(buf)
        assert header.n_layers == 8
        assert sum(c.shape[0] for c in chunks) == 15

    def test_deterministic_per_seed(self):
        a = generate_dump(two_block_spec(seed=3), 2, 4)
        b = generate_dump(two_block_spec(seed=3), 2, 4)
        assert all(np.array_equal(x, y) for x, y in zip(a.chunks, b.chunks))


class TestPipelineClosure:
    def test_clustering_recovers_planted_layout(self):
        # Contrast 0.9/0.1 with mild jitter must be recovered for every seed.
        for n in (8, 16):
            for seed in range(20):
                spec = two_block_spec(n=n, noise=0.05, seed=seed)
                part = spectral_cluster(to_affinity(generate_similarity(spec)), 2, seed=seed)
                assert {frozenset(c) for c in part.clusters} == {
                    frozenset(c) for c in spec.cluster_layout
                }
