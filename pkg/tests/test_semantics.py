"""Contexts, the toy embedder, embedding files, correlation and the alignment head."""

import json

import numpy as np
import pytest

from components.semantics.alignment import (
    AlignmentHeadConfig,
    SemanticHead,
    bootstrap_tokens,
    class_likelihood,
)
from components.semantics.contexts import (
    SupervisionSource,
    build_template_context,
    class_name_context,
    load_contexts,
    mask_class_mentions,
    save_contexts,
)
from components.semantics.correlation import correlation_matrix, mean_offdiag, source_label
from components.semantics.embedder import bucket, tokenize, toy_embed
from components.semantics.embeddings import SemanticEmbeddingSet, dumps_embeddings, load_embeddings, save_embeddings
from components.semantics.helpers import analyze_sets, convert_contexts, ordering_line
from components.taskgen.generator import preset_spec
from components.taskgen.paired import paired_semantics
from core.tensor import Tensor, backward
from errors import ConfigError, ContractError, DimensionError, FormatError, InputError, NumericError


def _set(class_id, *rows, source=SupervisionSource.CONTEXT):
    return SemanticEmbeddingSet(class_id=class_id, tokens=np.array(rows, dtype=np.float64), source=source)


class TestMasking:
    """Class-name mentions become [MASK]."""

    def test_whole_word_case_insensitive(self):
        ctx = mask_class_mentions("Effusion is fluid. An effusion, or effusions, blunts angles.", "effusion")
        assert ctx.context_text == "[MASK] is fluid. An [MASK], or effusions, blunts angles."
        assert ctx.replacements == 2
        assert ctx.mask_count == 2
        assert not ctx.fallback

    def test_multiword_name(self):
        ctx = mask_class_mentions("A pleural effusion appears.", "pleural effusion")
        assert ctx.context_text == "A [MASK] appears."

    def test_no_mention_appends_fallback(self):
        ctx = mask_class_mentions("Fluid collects around the lung.", "effusion")
        assert ctx.fallback
        assert ctx.replacements == 0
        assert ctx.context_text.endswith("This image shows [MASK].")

    def test_existing_mask_tokens_are_kept(self):
        ctx = mask_class_mentions("The symptom of mask in chest x-ray image is [MASK].", "mask")
        assert ctx.context_text == "The symptom of [MASK] in chest x-ray image is [MASK]."
        assert ctx.replacements == 1
        assert not ctx.fallback

    def test_template_sentence_gains_one_mask(self):
        ctx = mask_class_mentions("The symptom of nodule in chest x-ray image is [MASK].", "nodule")
        assert ctx.replacements == 1
        assert ctx.mask_count == 2

    def test_premasked_text_needs_no_fallback(self):
        ctx = mask_class_mentions("[MASK] is a round opacity.", "nodule")
        assert ctx.context_text == "[MASK] is a round opacity."
        assert ctx.replacements == 0
        assert not ctx.fallback

    @pytest.mark.parametrize("text,name", [("", "effusion"), ("text", ""), ("text", "   ")])
    def test_empty_inputs(self, text, name):
        with pytest.raises(InputError):
            mask_class_mentions(text, name)

    def test_template_keeps_own_mask(self):
        ctx = build_template_context(3, "nodule")
        assert ctx.context_text == "The symptom of nodule in chest x-ray image is [MASK]."
        assert ctx.source is SupervisionSource.TEMPLATE
        assert ctx.mask_count == 1

    def test_template_without_mask(self):
        with pytest.raises(InputError):
            build_template_context(0, "nodule", "A photo of [CLASS].")

    def test_class_name_context_is_bare_name(self):
        ctx = class_name_context(1, "mass")
        assert ctx.context_text == "mass"
        assert ctx.mask_count == 0


class TestContextFiles:
    """Context files load, validate and convert."""

    def test_roundtrip(self, tmp_path):
        contexts = [mask_class_mentions("A nodule is a small round spot.", "nodule", 0),
                    build_template_context(1, "mass")]
        save_contexts(tmp_path / "ctx.json", "demo", contexts)
        task, loaded = load_contexts(tmp_path / "ctx.json")
        assert task == "demo"
        assert [c.context_text for c in loaded] == [c.context_text for c in contexts]

    def test_raw_text_is_masked_on_load(self, tmp_path):
        path = tmp_path / "ctx.json"
        path.write_text(json.dumps({"classes": [
            {"id": 0, "name": "edema", "source": "context", "text": "Edema shows haze."}]}))
        _, contexts = load_contexts(path)
        assert contexts[0].context_text == "[MASK] shows haze."

    def test_partly_masked_entry_is_masked_fully(self, tmp_path):
        path = tmp_path / "ctx.json"
        path.write_text(json.dumps({"classes": [
            {"id": 0, "name": "edema", "source": "context", "text": "[MASK] shows haze. Edema spreads."}]}))
        _, contexts = load_contexts(path)
        assert contexts[0].context_text == "[MASK] shows haze. [MASK] spreads."
        assert contexts[0].mask_count == 2

    def test_duplicate_ids(self, tmp_path):
        path = tmp_path / "ctx.json"
        entry = {"id": 0, "name": "edema", "source": "context", "text": "[MASK] shows haze."}
        path.write_text(json.dumps({"classes": [entry, entry]}))
        with pytest.raises(FormatError, match="duplicate"):
            load_contexts(path)

    def test_unknown_source_names_class(self, tmp_path):
        path = tmp_path / "ctx.json"
        path.write_text(json.dumps({"classes": [
            {"id": 4, "name": "edema", "source": "wiki", "text": "[MASK]."}]}))
        with pytest.raises(FormatError, match="class 4"):
            load_contexts(path)

    def test_convert_to_class_names(self):
        contexts = [mask_class_mentions("Mass is big.", "mass", 0)]
        converted = convert_contexts(contexts, "class_name")
        assert converted[0].source is SupervisionSource.CLASS_NAME
        assert converted[0].context_text == "mass"
        assert convert_contexts(contexts, None) == contexts


class TestToyEmbedder:
    """Deterministic hashed n-gram embeddings."""

    def test_tokenize_keeps_masks(self):
        assert tokenize("The [MASK] is Round.") == ["the", "[MASK]", "is", "round"]

    def test_bucket_is_stable(self):
        assert bucket("abc", 2048) == bucket("abc", 2048)
        assert 0 <= bucket("xyz", 16) < 16

    def test_one_unit_vector_per_mask(self):
        ctx = mask_class_mentions("Nodule here. Another nodule there.", "nodule", 2)
        emb = toy_embed(ctx, dim=16)
        assert emb.m == 2
        assert emb.class_id == 2
        np.testing.assert_allclose(np.linalg.norm(emb.tokens, axis=1), 1.0)

    def test_deterministic(self):
        ctx = build_template_context(0, "edema")
        np.testing.assert_array_equal(toy_embed(ctx, 8, seed=3).tokens, toy_embed(ctx, 8, seed=3).tokens)

    def test_class_name_embeds_the_name(self):
        a = toy_embed(class_name_context(0, "edema"), 16)
        b = toy_embed(class_name_context(1, "emphysema"), 16)
        assert a.m == b.m == 1
        assert not np.allclose(a.tokens, b.tokens)

    def test_invalid_settings(self):
        with pytest.raises(ContractError):
            toy_embed(class_name_context(0, "edema"), dim=0)


class TestEmbeddingFiles:
    """Embedding sets and their file format."""

    def test_rejects_zero_token(self):
        with pytest.raises(InputError):
            _set(0, [0.0, 0.0])

    def test_save_is_byte_stable(self, tmp_path):
        sets = [_set(0, [0.1, 0.2, 0.3]), _set(1, [1.0 / 3.0, 2.0, -1e-12], [4.0, 5.0, 6.0])]
        save_embeddings(tmp_path / "a.json", sets)
        loaded = load_embeddings(tmp_path / "a.json")
        assert dumps_embeddings(loaded) == (tmp_path / "a.json").read_text()
        np.testing.assert_array_equal(loaded[1].tokens, sets[1].tokens)

    def test_dimension_mismatch_names_class(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dim": 2, "classes": [
            {"id": 0, "tokens": [[1.0, 0.0]]}, {"id": 7, "tokens": [[1.0, 0.0, 0.0]]}]}))
        with pytest.raises(FormatError, match="class 7"):
            load_embeddings(path)

    def test_zero_vector_names_class(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dim": 2, "classes": [{"id": 3, "tokens": [[0.0, 0.0]]}]}))
        with pytest.raises(FormatError, match="class 3"):
            load_embeddings(path)

    def test_invalid_json_reports_offset(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"dim": 2, "classes": [')
        with pytest.raises(FormatError) as info:
            load_embeddings(path)
        assert info.value.offset is not None


class TestCorrelation:
    """Inter-class correlation of mean token vectors."""

    def test_orthogonal_classes(self):
        matrix = correlation_matrix([_set(0, [1.0, 0.0]), _set(1, [0.0, 2.0])])
        np.testing.assert_allclose(matrix, np.eye(2))
        assert mean_offdiag(matrix) == 0.0

    def test_symmetric_unit_diagonal(self, rng):
        sets = [_set(c, *rng.normal(size=(3, 5))) for c in range(4)]
        matrix = correlation_matrix(sets)
        np.testing.assert_array_equal(matrix, matrix.T)
        np.testing.assert_array_equal(np.diag(matrix), np.ones(4))
        assert np.all(np.abs(matrix) <= 1.0)

    def test_mean_uses_unit_tokens(self):
        # long token must not dominate the class mean
        sets = [_set(0, [100.0, 0.0], [0.0, 1.0]), _set(1, [1.0, 1.0])]
        np.testing.assert_allclose(correlation_matrix(sets)[0, 1], 1.0)

    def test_three_class_example(self):
        sets = [_set(0, [1.0, 0.0]), _set(1, [0.0, 1.0]), _set(2, [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)])]
        matrix = correlation_matrix(sets)
        expected = np.array([[1.0, 0.0, 1.0 / np.sqrt(2.0)], [0.0, 1.0, 1.0 / np.sqrt(2.0)],
                             [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0), 1.0]])
        np.testing.assert_allclose(matrix, expected, atol=1e-12)
        assert mean_offdiag(matrix) == pytest.approx(0.4714, abs=1e-4)

    def test_mean_offdiag_bounds(self):
        assert mean_offdiag(np.ones((3, 3))) == 1.0
        with pytest.raises(ContractError):
            mean_offdiag(np.ones((1, 1)))

    def test_needs_two_classes(self):
        with pytest.raises(ContractError):
            correlation_matrix([_set(0, [1.0, 0.0])])

    def test_cancelling_tokens(self):
        with pytest.raises(NumericError):
            correlation_matrix([_set(0, [1.0, 0.0], [-1.0, 0.0]), _set(1, [0.0, 1.0])])

    def test_paired_sources_are_ordered(self):
        paired = paired_semantics(preset_spec("easy", seed=1), d_text=32, seed=0)
        context = analyze_sets("context.json", paired.context)
        class_name = analyze_sets("class_name.json", paired.class_name)
        assert class_name.mean_offdiag > 0.9
        assert context.mean_offdiag < 0.5
        assert ordering_line([class_name, context]).startswith("context")
        assert source_label(paired.template) == "template"
        assert source_label(paired.context + paired.template) == "mixed"


class TestLikelihood:
    """Single-class likelihood under the alignment head."""

    def test_single_token(self):
        emb = _set(0, [0.3, np.sqrt(1.0 - 0.09)])
        p = class_likelihood([1.0, 0.0], emb, [0], AlignmentHeadConfig(tau=10.0))
        assert p == pytest.approx(0.95257, abs=1e-5)

    def test_parallel_embedding(self):
        p = class_likelihood([2.0, 1.0], _set(0, [4.0, 2.0]), [0], AlignmentHeadConfig(tau=10.0))
        assert p == pytest.approx(0.9999546, abs=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_mean_aggregate_within_token_bounds(self, seed):
        rng = np.random.default_rng(seed)
        emb = _set(0, *rng.normal(size=(5, 4)))
        z = rng.normal(size=4)
        cfg = AlignmentHeadConfig(tau=3.0, aggregate="mean")
        sims = emb.normalized() @ (z / np.linalg.norm(z))
        p = class_likelihood(z, emb, range(5), cfg)
        lower, upper = (1.0 / (1.0 + np.exp(-cfg.tau * s)) for s in (sims.min(), sims.max()))
        assert lower - 1e-12 <= p <= upper + 1e-12

    def test_zero_similarity_is_one_half(self):
        emb = _set(0, [0.0, 1.0], [1.0, 0.0], [-1.0, 0.0])
        assert class_likelihood([1.0, 0.0], emb, [0], AlignmentHeadConfig()) == 0.5
        assert class_likelihood([1.0, 0.0], emb, [1, 2], AlignmentHeadConfig()) == 0.5

    def test_scale_invariant(self):
        emb = _set(0, [1.0, 2.0], [0.5, -1.0])
        cfg = AlignmentHeadConfig(tau=3.0)
        assert class_likelihood([2.0, 1.0], emb, [0, 1], cfg) == pytest.approx(
            class_likelihood([20.0, 10.0], emb, [0, 1], cfg))

    def test_mean_aggregate(self):
        emb = _set(0, [1.0, 0.0], [1.0, 0.0])
        p = class_likelihood([1.0, 0.0], emb, [0, 1], AlignmentHeadConfig(tau=2.0, aggregate="mean"))
        assert p == pytest.approx(1.0 / (1.0 + np.exp(-2.0)))

    def test_errors(self):
        emb = _set(0, [1.0, 0.0])
        with pytest.raises(ContractError):
            class_likelihood([1.0, 0.0], emb, [], AlignmentHeadConfig())
        with pytest.raises(NumericError):
            class_likelihood([0.0, 0.0], emb, [0], AlignmentHeadConfig())
        with pytest.raises(DimensionError):
            class_likelihood([1.0, 0.0, 0.0], emb, [0], AlignmentHeadConfig())


class TestBootstrap:
    """Token subsets drawn without replacement."""

    def test_distinct_sorted_indices(self, rng):
        emb = _set(0, *np.eye(6))
        for _ in range(20):
            idx = bootstrap_tokens(emb, 4, rng)
            assert len(idx) == 4 == len(set(idx))
            assert list(idx) == sorted(idx)

    def test_small_sets_use_every_token(self, rng):
        emb = _set(0, [1.0, 0.0], [0.0, 1.0])
        np.testing.assert_array_equal(bootstrap_tokens(emb, 4, rng), [0, 1])

    def test_repeated_draws_cover_every_token(self):
        emb = _set(0, *np.eye(4))
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(40):
            seen.update(int(i) for i in bootstrap_tokens(emb, 2, rng))
        assert seen == {0, 1, 2, 3}

    def test_fixed_seed_replays(self):
        emb = _set(0, *np.eye(6))
        first, second = np.random.default_rng(5), np.random.default_rng(5)
        for _ in range(10):
            np.testing.assert_array_equal(bootstrap_tokens(emb, 3, first), bootstrap_tokens(emb, 3, second))

    def test_invalid_m0(self, rng):
        with pytest.raises(ContractError):
            bootstrap_tokens(_set(0, [1.0]), 0, rng)


class TestSemanticHead:
    """Batched head agrees with class_likelihood and differentiates."""

    @pytest.fixture
    def sets(self, rng):
        return [_set(c, *rng.normal(size=(3, 4))) for c in range(3)]

    def test_matches_class_likelihood(self, rng, sets):
        cfg = AlignmentHeadConfig(tau=5.0)
        head = SemanticHead(cfg, sets, visual_dim=6, seed=2)
        z = rng.normal(size=(2, 6))
        probs = head.probabilities(z, head.all_tokens()).data
        weight = head.params["projection.weight"].data
        for i in range(2):
            for c in range(3):
                expected = class_likelihood(z[i], sets[c], range(3), cfg, projection=weight)
                assert probs[i, c] == pytest.approx(expected, rel=1e-12)

    def test_projection_gradient(self, rng, sets):
        head = SemanticHead(AlignmentHeadConfig(), sets, visual_dim=5)
        loss = head.probabilities(Tensor(rng.normal(size=(3, 5)))).sum()
        grads = backward(loss, head.trainable_parameters())
        assert grads["projection.weight"].shape == (5, 4)
        assert np.any(grads["projection.weight"] != 0.0)

    def test_identity_projection_needs_matching_dims(self, sets):
        with pytest.raises(ConfigError):
            SemanticHead(AlignmentHeadConfig(projection=False), sets, visual_dim=6)

    def test_class_ids_must_be_contiguous(self):
        with pytest.raises(ConfigError):
            SemanticHead(AlignmentHeadConfig(), [_set(0, [1.0]), _set(2, [1.0])], visual_dim=3)

    def test_one_hot_codes(self):
        head = SemanticHead.one_hot(AlignmentHeadConfig(), n_classes=3, visual_dim=8)
        assert head.kind == "one_hot"
        assert head.text_dim == 3
        np.testing.assert_array_equal(head.sets[1].tokens, [[0.0, 1.0, 0.0]])

    def test_state_roundtrip(self, rng, sets):
        head = SemanticHead(AlignmentHeadConfig(m0=2), sets, visual_dim=5, seed=4)
        tensors = {k: t.data for k, t in head.state_tensors().items()}
        restored = SemanticHead.from_state(head.manifest(), tensors)
        z = rng.normal(size=(2, 5))
        np.testing.assert_array_equal(restored.logits(z, restored.all_tokens()).data,
                                      head.logits(z, head.all_tokens()).data)

    def test_config_validation(self):
        with pytest.raises(ConfigError) as info:
            AlignmentHeadConfig.from_dict({"tau": 0, "aggregate": "max"})
        assert len(info.value.violations) == 2
