import numpy as np
import pytest

import training.trainer as trainer
from harness.metrics import MetricReport
from model.span_model import SpanExtractionModel
from training.plan import RunConfig, Stage, TaskSpec, TrainingPlan
from training.trainer import (
    RestartResult,
    learning_rate_grid,
    multitask_batches,
    random_restarts,
    run_plan,
    run_stage,
    subsample,
)

MAX_LEN = 32


def _task(name, suite, *, dev=True, **kwargs):
    train, dev_examples = suite
    return TaskSpec(name=name, train=tuple(train), dev=tuple(dev_examples) if dev else (), **kwargs)


# ─────────────────────────────────────────────────────────────── sampling
def test_subsample_draws_distinct_items_deterministically():
    data = list(range(10_000))
    picked = subsample(data, 1000, seed=3)
    assert len(picked) == len(set(picked)) == 1000
    assert picked == sorted(picked)
    assert subsample(data, 1000, seed=3) == picked
    assert subsample(data, 1000, seed=4) != picked


def test_subsample_clamps_and_validates():
    assert subsample([1, 2, 3], 10, seed=0) == [1, 2, 3]
    with pytest.raises(ValueError):
        subsample([1, 2, 3], 0, seed=0)


def test_multitask_batches_alternate_and_reshuffle_per_task():
    a = [f"a{i}" for i in range(4)]
    b = [f"b{i}" for i in range(6)]
    stream = multitask_batches([("A", a), ("B", b)], 2, np.random.default_rng(0))
    drawn = [next(stream) for _ in range(12)]
    assert [name for name, _ in drawn] == ["A", "B"] * 6

    a_batches = [batch for name, batch in drawn if name == "A"]
    b_batches = [batch for name, batch in drawn if name == "B"]
    for i in range(0, 6, 2):
        assert sorted(a_batches[i] + a_batches[i + 1]) == a
    for i in range(0, 6, 3):
        assert sorted(sum(b_batches[i : i + 3], [])) == b


def test_multitask_batches_single_task_is_shuffled_epochs():
    items = list(range(5))
    stream = multitask_batches([("only", items)], 2, np.random.default_rng(1))
    epoch = [next(stream)[1] for _ in range(3)]
    assert [len(b) for b in epoch] == [2, 2, 1]
    assert sorted(sum(epoch, [])) == items


def test_multitask_batches_rejects_empty_tasks():
    with pytest.raises(ValueError):
        next(multitask_batches([], 2, np.random.default_rng(0)))
    with pytest.raises(ValueError, match="no examples"):
        next(multitask_batches([("A", [])], 2, np.random.default_rng(0)))


# ────────────────────────────────────────────────────────────────── stages
def test_single_task_step_count(tiny_config, lookup_suite, lookup_vocab):
    task = _task("lookup", lookup_suite, dev=False)
    model = SpanExtractionModel.initialize(tiny_config, 0)
    config = RunConfig(batch_size=20, epochs=5)
    report, state = run_stage(
        model, Stage(("lookup",)), {"lookup": task}, config, 0, vocab=lookup_vocab, max_len=MAX_LEN
    )
    assert report.steps == 25
    assert state.t == 25
    assert [r.epoch for r in report.records] == [1, 2, 3, 4, 5]
    assert [r.step for r in report.records] == [5, 10, 15, 20, 25]
    assert all(r.metric is None for r in report.records)


def test_epoch_precedence_and_subsampling(tiny_config, lookup_suite, lookup_vocab):
    config = RunConfig(batch_size=20, epochs=5)
    model = SpanExtractionModel.initialize(tiny_config, 0)

    task = _task("lookup", lookup_suite, dev=False, epochs=2)
    report, _ = run_stage(
        model, Stage(("lookup",)), {"lookup": task}, config, 0, vocab=lookup_vocab, max_len=MAX_LEN
    )
    assert report.steps == 10

    stage = Stage(("lookup",), {"epochs": 1})
    report, _ = run_stage(model, stage, {"lookup": task}, config, 0, vocab=lookup_vocab, max_len=MAX_LEN)
    assert report.steps == 5

    small = _task("lookup", lookup_suite, dev=False, subsample_n=40)
    report, _ = run_stage(
        model, Stage(("lookup",)), {"lookup": small}, config, 0, vocab=lookup_vocab, max_len=MAX_LEN
    )
    assert report.steps == 10


def test_records_carry_dev_metric(tiny_config, lookup_suite, lookup_vocab):
    task = _task("lookup", lookup_suite)
    model = SpanExtractionModel.initialize(tiny_config, 0)
    report, _ = run_stage(
        model,
        Stage(("lookup",)),
        {"lookup": task},
        RunConfig(batch_size=50, epochs=2),
        0,
        vocab=lookup_vocab,
        max_len=MAX_LEN,
    )
    assert all(r.metric_name == "exact_match" for r in report.records)
    assert all(0.0 <= r.metric <= 1.0 for r in report.records)
    assert report.final_metric["lookup"] == report.records[-1].metric
    assert report.best_metric["lookup"] == max(r.metric for r in report.records)
    assert set(report.records[0].to_dict()) == {
        "stage", "task", "epoch", "step", "loss", "metric", "metric_name"
    }


def test_multitask_stage_cycles_until_step_budget(tiny_config, lookup_suite, lookup_vocab):
    train, dev = lookup_suite
    tasks = {
        "a": TaskSpec("a", tuple(train[:40])),
        "b": TaskSpec("b", tuple(train[40:100])),
    }
    model = SpanExtractionModel.initialize(tiny_config, 0)
    config = RunConfig(batch_size=20, epochs=1, max_steps=7)
    report, state = run_stage(
        model, Stage(("a", "b")), tasks, config, 0, vocab=lookup_vocab, max_len=MAX_LEN
    )
    assert report.steps == state.t == 7
    # a window per 5 batches (2 + 3) and one for the remainder, each with a record per task
    assert [(r.task, r.step) for r in report.records] == [("a", 5), ("b", 5), ("a", 7), ("b", 7)]
    assert report.stage == "a+b"

    default_budget, _ = run_stage(
        SpanExtractionModel.initialize(tiny_config, 0),
        Stage(("a", "b")),
        tasks,
        RunConfig(batch_size=20, epochs=2),
        0,
        vocab=lookup_vocab,
        max_len=MAX_LEN,
    )
    assert default_budget.steps == 10


def test_training_is_bit_reproducible(tiny_config, lookup_suite, lookup_vocab):
    plan = TrainingPlan.chain([_task("lookup", lookup_suite, dev=False)])
    config = RunConfig(batch_size=20, epochs=2, seed=7)
    digests = []
    for _ in range(2):
        model = SpanExtractionModel.initialize(tiny_config, 7)
        run_plan(model, plan, config, vocab=lookup_vocab, max_len=MAX_LEN)
        digests.append(model.params_digest())
    assert digests[0] == digests[1]
    assert digests[0] != SpanExtractionModel.initialize(tiny_config, 7).params_digest()


def test_training_lowers_loss(tiny_config, lookup_suite, lookup_vocab):
    task = _task("lookup", lookup_suite, dev=False)
    model = SpanExtractionModel.initialize(tiny_config, 0)
    report, _ = run_stage(
        model,
        Stage(("lookup",)),
        {"lookup": task},
        RunConfig(batch_size=10, epochs=8, learning_rate=1e-2),
        0,
        vocab=lookup_vocab,
        max_len=MAX_LEN,
    )
    assert report.records[-1].loss < report.records[0].loss


# ──────────────────────────────────────────────────────────────────── plans
def _chain(lookup_suite, names, **kwargs):
    train, _ = lookup_suite
    tasks = [TaskSpec(name, tuple(train[i * 20 : (i + 1) * 20])) for i, name in enumerate(names)]
    return TrainingPlan.chain(tasks, **kwargs)


def test_stage_boundary_resets_optimizer_but_keeps_weights(tiny_config, lookup_suite, lookup_vocab):
    plan = _chain(lookup_suite, ["inter", "target"])
    seen = {}

    def on_end(index, model, state):
        seen[("end", index)] = (model.params_digest(), state.t)

    def on_start(index, model, state):
        seen[("start", index)] = (model.params_digest(), state.is_reset())

    model = SpanExtractionModel.initialize(tiny_config, 0)
    run_plan(
        model,
        plan,
        RunConfig(batch_size=10, epochs=1),
        vocab=lookup_vocab,
        max_len=MAX_LEN,
        on_stage_start=on_start,
        on_stage_end=on_end,
    )
    assert seen[("end", 0)][0] == seen[("start", 1)][0]
    assert seen[("end", 0)][1] == 2
    assert seen[("start", 1)][1] is True


def test_optimizer_state_carries_over_without_reset(tiny_config, lookup_suite, lookup_vocab):
    plan = _chain(lookup_suite, ["inter", "target"], reset_optimizer_between_stages=False)
    states = {}

    def on_start(index, model, state):
        states[index] = state.t

    model = SpanExtractionModel.initialize(tiny_config, 0)
    result = run_plan(
        model,
        plan,
        RunConfig(batch_size=10, epochs=1),
        vocab=lookup_vocab,
        max_len=MAX_LEN,
        on_stage_start=on_start,
    )
    assert states == {0: 0, 1: 2}
    assert result.optimizer_state.t == 4


def test_decayed_second_stage_trains_without_optimizer_reset(tiny_config, lookup_suite, lookup_vocab):
    plan = _chain(lookup_suite, ["inter", "target"], reset_optimizer_between_stages=False)
    digests = {}

    def on_start(index, model, state):
        digests[index] = model.params_digest()

    model = SpanExtractionModel.initialize(tiny_config, 0)
    result = run_plan(
        model,
        plan,
        RunConfig(batch_size=10, epochs=1, linear_decay=True),
        vocab=lookup_vocab,
        max_len=MAX_LEN,
        on_stage_start=on_start,
    )
    assert result.optimizer_state.t == 4
    assert model.params_digest() != digests[1]


def test_three_stage_chain_runs_in_order(tiny_config, lookup_suite, lookup_vocab):
    plan = _chain(lookup_suite, ["i1", "i2", "t"])
    order = []
    model = SpanExtractionModel.initialize(tiny_config, 0)
    result = run_plan(
        model,
        plan,
        RunConfig(batch_size=10, epochs=1),
        vocab=lookup_vocab,
        max_len=MAX_LEN,
        on_stage_start=lambda i, m, s: order.append(i),
    )
    assert order == [0, 1, 2]
    assert [s.stage for s in result.stages] == ["i1", "i2", "t"]
    assert [r.task for r in result.records] == ["i1", "i2", "t"]
    assert plan.target_task == "t"


# ──────────────────────────────────────────────────────────────── restarts
def test_restart_ties_go_to_first_seed(monkeypatch, tiny_config, lookup_suite, lookup_vocab):
    monkeypatch.setattr(trainer, "evaluate_task", lambda *a, **k: MetricReport("exact_match", 0.5, 10, 10))
    plan = TrainingPlan.chain([_task("lookup", lookup_suite)])
    result = random_restarts(
        plan,
        RunConfig(batch_size=50, epochs=1, seed=3),
        4,
        model_config=tiny_config,
        vocab=lookup_vocab,
        max_len=MAX_LEN,
    )
    assert result.best_seed == 3
    assert result.scores == {3: 0.5, 4: 0.5, 5: 0.5, 6: 0.5}
    assert result.best.seed == 3
    assert result.target_task == "lookup"


def test_restarts_pick_best_dev_score(monkeypatch, tiny_config, lookup_suite, lookup_vocab):
    scores = iter([0.1, 0.9, 0.4])
    monkeypatch.setattr(
        trainer, "evaluate_task", lambda *a, **k: MetricReport("exact_match", next(scores), 10, 10)
    )
    # epoch records silenced: evaluate_task only scores each finished run
    monkeypatch.setattr(trainer, "_record", lambda *a, **k: None)
    plan = TrainingPlan.chain([_task("lookup", lookup_suite)])
    result = random_restarts(
        plan,
        RunConfig(batch_size=50, epochs=1),
        3,
        model_config=tiny_config,
        vocab=lookup_vocab,
        max_len=MAX_LEN,
    )
    assert result.scores == {0: 0.1, 1: 0.9, 2: 0.4}
    assert result.best_seed == 1


def test_single_restart_equals_single_run(tiny_config, lookup_suite, lookup_vocab):
    plan = TrainingPlan.chain([_task("lookup", lookup_suite)])
    config = RunConfig(batch_size=25, epochs=2, seed=5)
    restart = random_restarts(plan, config, 1, model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN)
    model = SpanExtractionModel.initialize(tiny_config, 5)
    run_plan(model, plan, config, vocab=lookup_vocab, max_len=MAX_LEN)
    assert restart.best.model.params_digest() == model.params_digest()
    assert list(restart.scores) == [5]


def test_restarts_need_target_dev(tiny_config, lookup_suite, lookup_vocab):
    plan = TrainingPlan.chain([_task("lookup", lookup_suite, dev=False)])
    with pytest.raises(ValueError, match="dev"):
        random_restarts(plan, RunConfig(), 2, model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN)
    with pytest.raises(ValueError, match="dev"):
        learning_rate_grid(plan, RunConfig(), model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN)
    with pytest.raises(ValueError):
        random_restarts(plan, RunConfig(), 0, model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN)


def test_single_run_without_dev_is_unscored(tiny_config, lookup_suite, lookup_vocab):
    plan = TrainingPlan.chain([_task("lookup", lookup_suite, dev=False)])
    config = RunConfig(batch_size=50, epochs=1, seed=2)
    result = random_restarts(plan, config, model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN)
    assert result.scores == {}
    assert result.best_seed == 2
    assert result.best.stages[0].steps == 2


def test_learning_rate_grid_keeps_first_rate_on_ties(monkeypatch, tiny_config, lookup_suite, lookup_vocab):
    def fake_restarts(plan, config, k=None, **kwargs):
        score = {1e-3: 0.8, 3e-3: 0.8}.get(config.learning_rate, 0.2)
        return RestartResult(best=None, best_seed=0, scores={0: score}, target_task="lookup")

    monkeypatch.setattr(trainer, "random_restarts", fake_restarts)
    plan = TrainingPlan.chain([_task("lookup", lookup_suite)])
    best, results = learning_rate_grid(
        plan, RunConfig(), model_config=tiny_config, vocab=lookup_vocab, max_len=MAX_LEN
    )
    assert best == 1e-3
    assert set(results) == {3e-4, 1e-3, 3e-3}
