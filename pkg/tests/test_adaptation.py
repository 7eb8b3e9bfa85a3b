"""Augmentation, loss, optimizer and the adaptation loop."""

from dataclasses import replace

import numpy as np
import pytest

from components.adaptation.augment import AugmentConfig, augment, center_crop, eval_transform, hflip, random_crop
from components.adaptation.optim import AdamW, OptimizerState, adamw_step, bce_loss
from components.adaptation.pipeline import gradcheck_pipeline
from components.adaptation.training import AdaptedModel, TrainConfig, adapt, build_head
from components.encoder.encoder import EncoderConfig, FreezePolicy, apply_freeze, build_encoder
from components.semantics.alignment import AlignmentHeadConfig, SemanticHead
from components.semantics.contexts import SupervisionSource
from components.semantics.embeddings import SemanticEmbeddingSet
from components.taskgen.paired import paired_semantics
from core.tensor import Tensor
from errors import ConfigError, ContractError, DimensionError, FormatError, NumericError, TaskError


def _quick(**overrides):
    values = {"epochs": 2, "batch_size": 4, "learning_rate": 1e-3, "seed": 5}
    values.update(overrides)
    return TrainConfig(**values)


def _run(task, encoder_cfg, frozen_stages=1, head_config=None, embeddings=None, **train):
    encoder = build_encoder(encoder_cfg)
    apply_freeze(encoder, FreezePolicy(frozen_stages=frozen_stages))
    return adapt(task, encoder, head_config or AlignmentHeadConfig(), embeddings, _quick(**train))


@pytest.fixture
def small_embeddings(small_spec):
    return paired_semantics(small_spec, d_text=6, seed=0, tokens_per_class=5).context


class TestAugment:
    """Crop and flip transforms."""

    def test_center_crop(self):
        image = np.arange(36.0).reshape(1, 6, 6)
        np.testing.assert_array_equal(center_crop(image, 2), [[[14.0, 15.0], [20.0, 21.0]]])

    def test_random_crop_with_padding_keeps_size(self, rng):
        image = np.ones((1, 8, 8))
        out = random_crop(image, 8, 2, rng)
        assert out.shape == (1, 8, 8)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_hflip_reverses_width(self):
        image = np.array([[[1.0, 2.0, 3.0]]])
        np.testing.assert_array_equal(hflip(image), [[[3.0, 2.0, 1.0]]])

    def test_all_disabled_is_identity(self, rng):
        cfg = AugmentConfig(center_crop_enabled=False, random_crop_enabled=False, hflip_enabled=False)
        image = rng.normal(size=(1, 5, 5))
        np.testing.assert_array_equal(augment(image, cfg, rng), image)

    def test_flip_always(self, rng):
        cfg = AugmentConfig(random_crop_enabled=False, hflip_prob=1.0)
        image = rng.normal(size=(1, 4, 4))
        np.testing.assert_array_equal(augment(image, cfg, rng), image[..., ::-1])

    def test_replays_with_same_seed(self):
        image = np.arange(64.0).reshape(1, 8, 8)
        cfg = AugmentConfig(center_crop=6, random_crop=6)
        first, second = np.random.default_rng(1), np.random.default_rng(1)
        a = [augment(image, cfg, first) for _ in range(5)]
        b = [augment(image, cfg, second) for _ in range(5)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_output_size(self):
        assert AugmentConfig().output_size(32) == 32
        assert AugmentConfig(center_crop=28, random_crop=24).output_size(32) == 24
        assert AugmentConfig(center_crop=28, center_crop_enabled=False).output_size(32) == 32

    def test_oversized_crop_is_reported(self):
        violations = AugmentConfig(center_crop=40).validate(image_size=32)
        assert any("center_crop" in v for v in violations)
        with pytest.raises(ConfigError):
            eval_transform(np.zeros((1, 8, 8)), 10)

    def test_wrong_rank(self, rng):
        with pytest.raises(DimensionError):
            augment(np.zeros((8, 8)), AugmentConfig(), rng)


class TestLoss:
    """Mean binary cross-entropy."""

    def test_half_probability(self):
        assert bce_loss(Tensor([[0.5]]), np.array([[1]])).item() == pytest.approx(np.log(2.0))

    def test_mean_over_batch_and_classes(self):
        probs = np.array([[0.9, 0.2], [0.3, 0.6]])
        targets = np.array([[1, 0], [0, 1]])
        expected = -np.mean(targets * np.log(probs) + (1 - targets) * np.log(1 - probs))
        assert bce_loss(Tensor(probs), targets).item() == pytest.approx(expected)

    def test_clamped_at_certainty(self):
        loss = bce_loss(Tensor([[0.0, 1.0]]), np.array([[1, 0]])).item()
        assert np.isfinite(loss)
        assert loss == pytest.approx(-np.log(1e-7), rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            bce_loss(Tensor([[0.5, 0.5]]), np.array([[1]]))


class TestAdamW:
    """Bias-corrected Adam with decoupled weight decay."""

    def test_zero_gradient_only_decays(self):
        params = {"w": Tensor([1.0], requires_grad=True)}
        adamw_step(params, {"w": np.zeros(1)}, OptimizerState.for_params(params), lr=1e-4, weight_decay=0.05)
        np.testing.assert_allclose(params["w"].data, [0.999995], rtol=0, atol=1e-15)

    def test_first_step_moves_by_lr(self):
        params = {"w": Tensor([0.0, 0.0], requires_grad=True)}
        adamw_step(params, {"w": np.array([3.0, -0.5])}, OptimizerState.for_params(params),
                   lr=0.01, weight_decay=0.0)
        np.testing.assert_allclose(params["w"].data, [-0.01, 0.01], rtol=1e-6)

    def test_frozen_parameters_untouched(self):
        frozen = Tensor([2.0])
        params = {"w": Tensor([1.0], requires_grad=True), "f": frozen}
        optimizer = AdamW(params, lr=0.1)
        optimizer.step({"w": np.ones(1)})
        assert frozen.data[0] == 2.0
        assert "f" not in optimizer.state.m

    def test_missing_gradient(self):
        params = {"w": Tensor([1.0], requires_grad=True)}
        with pytest.raises(ContractError):
            adamw_step(params, {}, OptimizerState.for_params(params))

    def test_non_finite_gradient_aborts_step(self):
        params = {"a": Tensor([1.0], requires_grad=True), "b": Tensor([1.0], requires_grad=True)}
        state = OptimizerState.for_params(params)
        with pytest.raises(NumericError):
            adamw_step(params, {"a": np.ones(1), "b": np.array([np.inf])}, state)
        assert params["a"].data[0] == 1.0
        assert state.step == 0

    def test_step_uses_accumulated_grad(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        optimizer = AdamW({"w": w}, lr=0.1, weight_decay=0.0)
        (w * w).sum().backward()
        optimizer.step()
        np.testing.assert_allclose(w.data, [0.9, 1.9], rtol=1e-6)
        optimizer.zero_grad()
        np.testing.assert_array_equal(w.grad, [0.0, 0.0])


class TestTrainConfig:
    """Training settings parse and validate."""

    def test_from_dict_merges_augmentation(self):
        cfg = TrainConfig.from_dict({"epochs": 3, "betas": [0.8, 0.9], "augmentation": {"hflip_prob": 0.0}})
        assert cfg.betas == (0.8, 0.9)
        assert cfg.augmentation.hflip_prob == 0.0
        assert cfg.augmentation.padding == AugmentConfig().padding
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_collects_violations(self):
        with pytest.raises(ConfigError) as info:
            TrainConfig.from_dict({"epochs": 0, "learning_rate": 0.0, "head": "linear"})
        assert len(info.value.violations) == 3

    def test_zero_learning_rate_only_when_allowed(self):
        assert TrainConfig(learning_rate=0.0).validate(allow_zero_lr=True) == []
        assert TrainConfig(learning_rate=0.0).validate()


class TestBuildHead:
    """Head construction from the run settings."""

    def test_semantic_needs_embeddings(self):
        with pytest.raises(ConfigError, match="paths.embeddings"):
            build_head("semantic", AlignmentHeadConfig(), 3, 8, None, seed=0)

    def test_class_count_must_match(self, small_embeddings):
        with pytest.raises(ConfigError):
            build_head("semantic", AlignmentHeadConfig(), 4, 8, small_embeddings, seed=0)

    def test_one_hot_ignores_embeddings(self, small_embeddings):
        head = build_head("one_hot", AlignmentHeadConfig(), 3, 8, small_embeddings, seed=0)
        assert head.kind == "one_hot"


class TestAdapt:
    """The adaptation loop on small tasks."""

    def test_history_shape(self, small_task, tiny_encoder_config, small_embeddings):
        model, history = _run(small_task, tiny_encoder_config, embeddings=small_embeddings)
        steps_per_epoch = -(-len(small_task.support_images) // 4)
        assert len(history.epochs) == 2
        assert len(history.step_losses) == 2 * steps_per_epoch
        assert history.epochs[0].mean_loss == pytest.approx(np.mean(history.step_losses[:steps_per_epoch]))
        assert history.trainable_params == sum(p.size for p in model.trainable_parameters().values())
        assert all(np.isfinite(history.step_losses))

    def test_frozen_parameters_bitwise_unchanged(self, small_task, tiny_encoder_config, small_embeddings):
        encoder = build_encoder(tiny_encoder_config)
        apply_freeze(encoder, FreezePolicy(frozen_stages=1))
        before = {k: p.numpy() for k, p in encoder.params.items()}
        adapt(small_task, encoder, AlignmentHeadConfig(), small_embeddings, _quick())
        for key, param in encoder.frozen_parameters().items():
            np.testing.assert_array_equal(param.data, before[key], err_msg=key)
        changed = [k for k, p in encoder.trainable_parameters().items() if not np.array_equal(p.data, before[k])]
        assert changed

    def test_deterministic(self, small_task, tiny_encoder_config, small_embeddings):
        model_a, history_a = _run(small_task, tiny_encoder_config, embeddings=small_embeddings)
        model_b, history_b = _run(small_task, tiny_encoder_config, embeddings=small_embeddings)
        assert history_a.step_losses == history_b.step_losses
        for key, param in model_a.parameters().items():
            np.testing.assert_array_equal(param.data, model_b.parameters()[key].data)
        np.testing.assert_array_equal(model_a.predict_logits(small_task.query_images),
                                      model_b.predict_logits(small_task.query_images))

    def test_seed_changes_run(self, small_task, tiny_encoder_config, small_embeddings):
        _, a = _run(small_task, tiny_encoder_config, embeddings=small_embeddings)
        _, b = _run(small_task, tiny_encoder_config, embeddings=small_embeddings, seed=6)
        assert a.step_losses != b.step_losses

    def test_zero_learning_rate_changes_nothing(self, small_task, tiny_encoder_config, small_embeddings):
        encoder = build_encoder(tiny_encoder_config)
        apply_freeze(encoder, FreezePolicy(frozen_stages=0))
        before = {k: p.numpy() for k, p in encoder.params.items()}
        adapt(small_task, encoder, AlignmentHeadConfig(), small_embeddings, _quick(learning_rate=0.0))
        for key, param in encoder.params.items():
            np.testing.assert_array_equal(param.data, before[key])

    @pytest.mark.parametrize("projection", [True, False])
    def test_one_hot_equals_orthonormal_semantic_head(self, small_task, tiny_encoder_config, projection):
        head_config = AlignmentHeadConfig(projection=projection)
        code_dim = small_task.n_classes if projection else tiny_encoder_config.output_dim
        codes = np.eye(small_task.n_classes, code_dim)
        sets = [SemanticEmbeddingSet(class_id=c, tokens=codes[c:c + 1], source=SupervisionSource.CLASS_NAME)
                for c in range(small_task.n_classes)]
        _, one_hot = _run(small_task, tiny_encoder_config, head_config=head_config, head="one_hot")
        _, semantic = _run(small_task, tiny_encoder_config, head_config=head_config, embeddings=sets)
        assert one_hot.step_losses == semantic.step_losses

    def test_head_only_policy_trains_head(self, small_task, tiny_encoder_config, small_embeddings):
        encoder = build_encoder(tiny_encoder_config)
        apply_freeze(encoder, FreezePolicy.head_only(tiny_encoder_config.num_stages))
        model, history = adapt(small_task, encoder, AlignmentHeadConfig(), small_embeddings, _quick())
        assert history.trainable_params == model.head.params["projection.weight"].size

    def test_no_trainable_parameters_still_records_losses(self, small_task, tiny_encoder_config):
        encoder = build_encoder(tiny_encoder_config)
        apply_freeze(encoder, FreezePolicy.head_only(tiny_encoder_config.num_stages))
        _, history = adapt(small_task, encoder, AlignmentHeadConfig(projection=False), None,
                           _quick(head="one_hot"))
        assert history.trainable_params == 0
        assert len(history.epochs) == 2
        assert all(np.isfinite(history.epoch_losses))

    def test_eval_every_epoch(self, small_task, tiny_encoder_config, small_embeddings):
        _, history = _run(small_task, tiny_encoder_config, embeddings=small_embeddings, eval_every_epoch=True)
        assert all(0.0 <= e.mAUC_on_query <= 1.0 for e in history.epochs)
        assert "mAUC_on_query" in history.to_dict()["epochs"][0]

    def test_empty_support(self, small_task, tiny_encoder_config, small_embeddings):
        empty = replace(small_task, support_images=small_task.support_images[:0],
                        support_labels=small_task.support_labels[:0])
        with pytest.raises(TaskError):
            _run(empty, tiny_encoder_config, embeddings=small_embeddings)

    def test_image_size_mismatch(self, small_task, small_embeddings):
        cfg = EncoderConfig(image_size=8, patch_size=4, stages=((1, 8),), heads=2, output_dim=8)
        with pytest.raises(ConfigError, match="image_size"):
            _run(small_task, cfg, frozen_stages=0, embeddings=small_embeddings)

    def test_cropped_training_evaluates_center_crop(self, small_task, small_embeddings):
        cfg = EncoderConfig(image_size=8, patch_size=4, stages=((1, 8),), heads=2, output_dim=8)
        encoder = build_encoder(cfg)
        apply_freeze(encoder, FreezePolicy(frozen_stages=0))
        train = _quick(augmentation=AugmentConfig(center_crop=12, random_crop=8))
        model, _ = adapt(small_task, encoder, AlignmentHeadConfig(), small_embeddings, train)
        assert model.predict_proba(small_task.query_images).shape == (len(small_task.query_images), 3)


class TestAdaptedModel:
    """Checkpointed models evaluate identically."""

    def test_save_load_predicts_identically(self, tmp_path, small_task, tiny_encoder_config, small_embeddings):
        model, _ = _run(small_task, tiny_encoder_config, embeddings=small_embeddings)
        model.save(tmp_path / "model.ckpt")
        restored = AdaptedModel.load(tmp_path / "model.ckpt")
        assert restored.kind == "semantic"
        np.testing.assert_array_equal(restored.predict_logits(small_task.query_images),
                                      model.predict_logits(small_task.query_images))
        assert restored.evaluate(small_task).mAUC == model.evaluate(small_task).mAUC

    def test_encoder_only_checkpoint_is_rejected(self, tmp_path, tiny_encoder_config):
        from components.encoder.checkpoint import save_checkpoint

        path = save_checkpoint(tmp_path / "enc.ckpt", build_encoder(tiny_encoder_config))
        with pytest.raises(FormatError, match="no head"):
            AdaptedModel.load(path)

    def test_probabilities_are_sigmoid_of_logits(self, rng, tiny_encoder_config):
        head = SemanticHead.one_hot(AlignmentHeadConfig(), 3, tiny_encoder_config.output_dim)
        model = AdaptedModel(build_encoder(tiny_encoder_config), head)
        images = rng.normal(size=(4, 1, 16, 16))
        np.testing.assert_allclose(model.predict_proba(images),
                                   1.0 / (1.0 + np.exp(-model.predict_logits(images))))


class TestGradCheck:
    """The full objective differentiates correctly."""

    def test_small_pipeline_passes(self, tiny_encoder_config):
        report = gradcheck_pipeline(tiny_encoder_config, n_classes=3, batch=2, coords_per_tensor=3)
        assert report.passed, report.to_text()
        assert report.tensors_checked == len(build_encoder(tiny_encoder_config).params) + 1

    def test_negative_control_fails(self, tiny_encoder_config):
        report = gradcheck_pipeline(tiny_encoder_config, coords_per_tensor=2, corrupt_gradient=True)
        assert not report.passed


@pytest.mark.slow
class TestLearning:
    """Default settings on the easy preset."""

    @pytest.fixture(scope="class")
    def trained(self, easy_task):
        embeddings = paired_semantics(easy_task.spec, d_text=32, seed=0).context
        encoder = build_encoder(EncoderConfig())
        apply_freeze(encoder, FreezePolicy())
        return adapt(easy_task, encoder, AlignmentHeadConfig(), embeddings, TrainConfig())

    def test_loss_decreases(self, trained):
        _, history = trained
        assert history.epoch_losses[-1] < history.epoch_losses[0]

    def test_query_mauc(self, trained, easy_task):
        model, _ = trained
        assert model.evaluate(easy_task).mAUC >= 0.85

    def test_untrained_is_chance(self, easy_task):
        embeddings = paired_semantics(easy_task.spec, d_text=32, seed=0).context
        scores = []
        for seed in range(10):
            encoder = build_encoder(EncoderConfig(seed=seed))
            head = SemanticHead(AlignmentHeadConfig(), embeddings, encoder.config.output_dim, seed=seed)
            scores.append(AdaptedModel(encoder, head).evaluate(easy_task).mAUC)
        assert 0.4 <= np.mean(scores) <= 0.6
