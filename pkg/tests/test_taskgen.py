"""Synthetic task generation, task files and the nearest-pattern oracle."""

import numpy as np
import pytest

from components.taskgen.dataset_io import load_task, save_task
from components.taskgen.generator import TaskSpec, band_edges, class_names, class_patterns, generate_task, preset_spec
from components.taskgen.paired import oracle_mauc, paired_semantics
from components.semantics.correlation import correlation_matrix
from errors import ConfigError, FormatError, UnsupportedVersionError


class TestSpec:
    """Presets and validation."""

    def test_easy_preset(self):
        spec = preset_spec("easy", seed=4)
        assert (spec.n_classes, spec.k_shot, spec.query_size, spec.image_size) == (5, 5, 200, 32)
        assert spec.seed == 4

    def test_overrides_ignore_none(self):
        spec = preset_spec("hard", n_classes=3, k_shot=None)
        assert spec.n_classes == 3
        assert spec.k_shot == 5
        assert spec.pattern_overlap == 0.5

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset_spec("medium")

    def test_collects_violations(self):
        with pytest.raises(ConfigError) as info:
            TaskSpec.from_dict({"n_classes": 0, "noise_std": -1.0, "multilabel_prob": 2.0})
        assert len(info.value.violations) == 3

    def test_too_many_bands(self):
        assert TaskSpec(n_classes=10, image_size=8).validate()

    def test_class_names_stay_unique(self):
        names = class_names(25)
        assert len(set(names)) == 25


class TestGenerate:
    """Tasks are deterministic and honor the K-shot contract."""

    def test_shapes(self, easy_task):
        assert easy_task.support_images.shape == (25, 1, 32, 32)
        assert easy_task.support_labels.shape == (25, 5)
        assert easy_task.query_images.shape == (200, 1, 32, 32)
        assert easy_task.support_labels.dtype == np.uint8
        assert easy_task.summary() == "N=5 K=5 query=200"

    def test_every_class_has_k_support_positives(self, easy_task):
        assert np.all(easy_task.support_labels.sum(axis=0) >= easy_task.k_shot)
        assert np.all(easy_task.support_labels.sum(axis=1) >= 1)
        assert np.all(easy_task.query_labels.sum(axis=1) >= 1)

    def test_same_seed_same_task(self, small_spec):
        assert generate_task(small_spec).equals(generate_task(small_spec))

    def test_seed_changes_task(self, small_spec):
        other = TaskSpec(**{**small_spec.to_dict(), "seed": small_spec.seed + 1})
        assert not generate_task(small_spec).equals(generate_task(other))

    def test_disjoint_bands_are_orthogonal(self):
        spec = preset_spec("easy")
        flat = class_patterns(spec).reshape(spec.n_classes, -1)
        gram = flat @ flat.T
        np.testing.assert_array_equal(gram - np.diag(np.diag(gram)), np.zeros((5, 5)))
        assert band_edges(32, 5)[-1] == 32

    def test_overlap_correlates_patterns(self):
        flat = class_patterns(preset_spec("hard")).reshape(5, -1)
        assert np.all((flat @ flat.T) > 0.0)

    def test_noise_free_images_are_label_sums(self):
        spec = TaskSpec(n_classes=3, k_shot=1, query_size=5, image_size=12, noise_std=0.0, seed=2)
        task = generate_task(spec)
        expected = np.tensordot(task.query_labels.astype(float), task.patterns, axes=(1, 0))
        np.testing.assert_array_equal(task.query_images, expected)


class TestInvariants:
    """Guarantees that hold across many seeded specs."""

    def test_random_specs_keep_k_shot_and_disjoint_sets(self):
        rng = np.random.default_rng(0)
        for seed in range(100):
            spec = TaskSpec(n_classes=int(rng.integers(2, 7)), k_shot=int(rng.integers(1, 6)),
                            query_size=int(rng.integers(10, 41)), image_size=16,
                            noise_std=float(rng.uniform(0.0, 1.0)), pattern_overlap=float(rng.uniform(0.0, 0.5)),
                            multilabel_prob=float(rng.uniform(0.0, 0.5)), seed=seed)
            task = generate_task(spec)
            assert not set(task.support_ids) & set(task.query_ids)
            assert len(task.query_images) == spec.query_size
            assert np.all(task.support_labels.sum(axis=0) >= spec.k_shot), f"seed {seed}"

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_does_not_help_the_oracle(self, seed):
        clean = oracle_mauc(generate_task(preset_spec("easy", seed=seed, noise_std=0.1))).mAUC
        noisy = oracle_mauc(generate_task(preset_spec("easy", seed=seed, noise_std=2.0))).mAUC
        assert noisy <= clean + 0.02


class TestTaskFiles:
    """Task files are byte-stable and validated on load."""

    def test_roundtrip(self, tmp_path, small_task):
        path = save_task(small_task, tmp_path / "t.bin")
        assert load_task(path).equals(small_task)

    def test_identical_tasks_identical_bytes(self, tmp_path, small_spec):
        a = save_task(generate_task(small_spec), tmp_path / "a.bin")
        b = save_task(generate_task(small_spec), tmp_path / "b.bin")
        assert a.read_bytes() == b.read_bytes()

    def test_truncated(self, tmp_path, small_task):
        path = save_task(small_task, tmp_path / "t.bin")
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError) as info:
            load_task(path)
        assert info.value.offset is not None

    def test_trailing_bytes(self, tmp_path, small_task):
        path = save_task(small_task, tmp_path / "t.bin")
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_task(path)

    def test_other_version(self, tmp_path, small_task, monkeypatch):
        import components.taskgen.dataset_io as dataset_io

        monkeypatch.setattr(dataset_io, "TASK_FORMAT_VERSION", "fsadapt-task/2")
        path = save_task(small_task, tmp_path / "t.bin")
        monkeypatch.undo()
        with pytest.raises(UnsupportedVersionError):
            load_task(path)


class TestPairedSemantics:
    """Embedding sets generated alongside a task."""

    def test_one_set_per_class(self):
        paired = paired_semantics(preset_spec("easy"), d_text=16, tokens_per_class=4)
        assert [s.class_id for s in paired.context] == list(range(5))
        assert all(s.m == 4 and s.dim == 16 for s in paired.context)
        assert all(s.m == 1 for s in paired.class_name + paired.template)

    def test_deterministic(self):
        a = paired_semantics(preset_spec("easy"), d_text=8, seed=3)
        b = paired_semantics(preset_spec("easy"), d_text=8, seed=3)
        np.testing.assert_array_equal(a.context[2].tokens, b.context[2].tokens)


    def test_jitter_free_context_follows_pattern_geometry(self):
        spec = preset_spec("hard", seed=2)
        paired = paired_semantics(spec, d_text=8, seed=3, jitter=0.0, tokens_per_class=1)
        projection = np.random.default_rng(3).standard_normal((spec.channels * spec.image_size ** 2, 8))
        projected = class_patterns(spec).reshape(spec.n_classes, -1) @ projection
        unit = projected / np.linalg.norm(projected, axis=1, keepdims=True)
        np.testing.assert_allclose(correlation_matrix(paired.context), unit @ unit.T, rtol=0, atol=1e-12)


class TestOracle:
    """Nearest-pattern scores separate the easy preset."""

    def test_easy_oracle_is_near_perfect(self, easy_task):
        assert oracle_mauc(easy_task).mAUC > 0.95
