import random

import pytest

from lm_router.data import TrainingPair
from lm_router.modeling import build_model
from lm_router.protocol import RELATION_TEMPLATE_IDS, build_prompt
from lm_router.tokenizer import CharTokenizer
from lm_router.training import (
    Hyperparams,
    evaluate_router,
    fine_tune,
    synthetic_association_pairs,
    synthetic_keywords,
    train_loop,
)


class TestHyperparams:
    def test_published_defaults(self):
        hp = Hyperparams()
        assert hp.learning_rate == 1e-4
        assert hp.train_batch_size == 4
        assert hp.eval_batch_size == 4
        assert hp.num_epochs == 20
        assert hp.question_length == 512
        assert hp.target_length == 512
        assert hp.scheduler == "linear"
        assert hp.adam_betas == (0.9, 0.999)
        assert hp.adam_epsilon == 1e-8


class TestSyntheticCurriculum:
    def test_keywords_disjoint_from_real_relations(self):
        keywords = synthetic_keywords(200, random.Random(3))
        assert not set(keywords) & set(RELATION_TEMPLATE_IDS)
        assert len(keywords) == len(set(keywords)) == 200

    def test_pairs_share_keywords_but_not_subjects(self):
        train, held = synthetic_association_pairs(20, 10, seed=5)
        def keyword(prompt):
            return prompt.split("relationship ", 1)[1].split(" for ", 1)[0]
        assert {keyword(p.prompt) for p in held} <= {keyword(p.prompt) for p in train}
        assert all(p.target in "12345" for p in train + held)

    def test_deterministic_for_seed(self):
        assert synthetic_association_pairs(10, 6, seed=1) == synthetic_association_pairs(10, 6, seed=1)


def oracle_replay_stub(prompts: list[str]) -> list[str]:
    """Answers by replaying the fixed relation → id mapping off the prompt."""
    outputs = []
    for prompt in prompts:
        keyword = prompt.split("relationship ", 1)[1].split(" for ", 1)[0]
        outputs.append(str(RELATION_TEMPLATE_IDS[keyword]))
    return outputs


def balanced_holdout() -> list[TrainingPair]:
    return [
        TrainingPair(build_prompt(f"Subject {i}", relation), str(template_id))
        for i in range(4)
        for relation, template_id in RELATION_TEMPLATE_IDS.items()
    ]


class TestEvaluateRouter:
    def test_oracle_replay_stub_is_perfect(self):
        assert evaluate_router(oracle_replay_stub, balanced_holdout()) == 1.0

    def test_constant_stub_on_balanced_holdout(self):
        assert evaluate_router(lambda prompts: ["1"] * len(prompts), balanced_holdout()) == 0.2

    def test_undecodable_outputs_count_as_incorrect(self):
        assert evaluate_router(lambda prompts: ["banana"] * len(prompts), balanced_holdout()) == 0.0

    def test_out_of_set_digits_count_as_incorrect(self):
        assert evaluate_router(lambda prompts: ["0"] * len(prompts), balanced_holdout()) == 0.0

    def test_empty_holdout_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate_router(oracle_replay_stub, [])


class TestTrainLoop:
    def test_smoke_run_logs_one_row_per_epoch(self, tmp_path):
        tokenizer = CharTokenizer()
        model = build_model(tokenizer, d_model=32, num_layers=1, num_heads=2, d_ff=64)
        pairs = balanced_holdout()
        hp = Hyperparams(num_epochs=2, train_batch_size=4)
        losses = train_loop(model, tokenizer, pairs, pairs, hp, seed=0, log_path=tmp_path / "log.csv")
        assert [row.epoch for row in losses] == [1, 2]
        text = (tmp_path / "log.csv").read_text()
        assert text.splitlines()[0] == "epoch,train_loss,val_loss"
        assert len(text.splitlines()) == 3

    def test_steps_per_epoch_overrides_pass_length(self):
        tokenizer = CharTokenizer()
        model = build_model(tokenizer, d_model=32, num_layers=1, num_heads=2, d_ff=64)
        pairs = balanced_holdout()
        hp = Hyperparams(num_epochs=1, train_batch_size=4)
        losses = train_loop(model, tokenizer, pairs, pairs, hp, seed=0, steps_per_epoch=12)
        assert len(losses) == 1  # 12 steps = 2.4 passes over the 20 pairs

    def test_loss_decreases_on_trivial_data(self):
        tokenizer = CharTokenizer()
        model = build_model(tokenizer, d_model=48, num_layers=1, num_heads=2, d_ff=96)
        pairs = [TrainingPair("same prompt", "3")] * 8
        hp = Hyperparams(learning_rate=1e-3, num_epochs=4, train_batch_size=4)
        losses = train_loop(model, tokenizer, pairs, pairs, hp, seed=0)
        assert losses[-1].val_loss < losses[0].val_loss

    def test_early_stop_respects_min_epochs(self):
        tokenizer = CharTokenizer()
        model = build_model(tokenizer, d_model=48, num_layers=1, num_heads=2, d_ff=96)
        pairs = [TrainingPair("same prompt", "3")] * 8
        hp = Hyperparams(learning_rate=1e-3, num_epochs=6, train_batch_size=4)
        losses = train_loop(
            model, tokenizer, pairs, pairs, hp, seed=0,
            early_stop_val_loss=float("inf"), min_epochs=3,
        )
        assert len(losses) == 3


class TestFineTuneValidation:
    def test_requires_pairs(self, tmp_path):
        with pytest.raises(ValueError, match="training pairs"):
            fine_tune([], balanced_holdout(), base_dir=tmp_path, out_dir=tmp_path / "out")

    def test_requires_holdout(self, tmp_path):
        with pytest.raises(ValueError, match="holdout"):
            fine_tune(balanced_holdout(), [], base_dir=tmp_path, out_dir=tmp_path / "out")

    def test_requires_base(self):
        with pytest.raises(ValueError, match="base"):
            fine_tune(balanced_holdout(), balanced_holdout(), base_dir=None)
