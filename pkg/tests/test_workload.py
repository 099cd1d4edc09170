import pytest
from hypothesis import given, strategies as st

from screenpilot.workload import (
    CompletionState,
    Fixed,
    Pipeline,
    Stage,
    Stochastic,
    TaskSpec,
    Workflow,
    merge_workflows,
    ready_tasks,
    validate_workflow,
)


def wf_single(task):
    return Workflow([Pipeline("p", [Stage("s", [task])])])


def test_validate_minimal_ok():
    assert validate_workflow(wf_single(TaskSpec("t", cores=1))).ok


def test_validate_duplicate_id():
    wf = Workflow([Pipeline("p", [Stage("s", [TaskSpec("t1"), TaskSpec("t1")])])])
    report = validate_workflow(wf)
    assert not report.ok
    assert any("duplicate id" in v for v in report.violations)


def test_validate_zero_resource_task():
    report = validate_workflow(wf_single(TaskSpec("t", cores=0, gpus=0)))
    assert any("zero-resource" in v for v in report.violations)


def test_validate_spannable_gpu_task():
    report = validate_workflow(wf_single(TaskSpec("t", cores=0, gpus=1, spannable=True)))
    assert any("span" in v for v in report.violations)


def test_validate_empty_stage_and_pipeline():
    wf = Workflow([Pipeline("p", []), Pipeline("q", [Stage("s", [])])])
    report = validate_workflow(wf)
    assert any("no stages" in v for v in report.violations)
    assert any("no tasks" in v for v in report.violations)


def test_validate_nonpositive_durations():
    bad_fixed = wf_single(TaskSpec("a", duration=Fixed(0.0)))
    bad_stoch = wf_single(TaskSpec("b", duration=Stochastic(-1.0, 0.1)))
    assert not validate_workflow(bad_fixed).ok
    assert not validate_workflow(bad_stoch).ok


def test_ready_first_stage():
    t1, t2 = TaskSpec("t1"), TaskSpec("t2")
    wf = Workflow([Pipeline("p", [Stage("s1", [t1]), Stage("s2", [t2])])])
    assert ready_tasks(wf, CompletionState()) == [t1]


def test_ready_barrier_cleared():
    t1, t2 = TaskSpec("t1"), TaskSpec("t2")
    wf = Workflow([Pipeline("p", [Stage("s1", [t1]), Stage("s2", [t2])])])
    assert ready_tasks(wf, CompletionState(done={"t1"})) == [t2]


def test_ready_pipelines_concurrent():
    a, b = TaskSpec("a"), TaskSpec("b")
    wf = Workflow([Pipeline("p1", [Stage("s", [a])]), Pipeline("p2", [Stage("s", [b])])])
    assert set(t.id for t in ready_tasks(wf, CompletionState())) == {"a", "b"}


def test_ready_excludes_running():
    t1, t2 = TaskSpec("t1"), TaskSpec("t2")
    wf = Workflow([Pipeline("p", [Stage("s1", [t1, t2])])])
    assert ready_tasks(wf, CompletionState(running={"t1"})) == [t2]


def test_ready_unknown_id_rejected():
    wf = wf_single(TaskSpec("t"))
    with pytest.raises(ValueError):
        ready_tasks(wf, CompletionState(done={"ghost"}))


def test_merge_union():
    w_a = Workflow(
        [
            Pipeline("e1", [Stage("s", [TaskSpec("a")])]),
            Pipeline("e2", [Stage("s", [TaskSpec("b")])]),
        ]
    )
    w_b = Workflow([Pipeline("t1", [Stage("s", [TaskSpec("c")])])])
    merged = merge_workflows(w_a, w_b)
    assert len(merged.pipelines) == 3
    assert merged.task_ids() == {"a", "b", "c"}


def test_merge_identity_with_empty():
    w = wf_single(TaskSpec("t"))
    assert merge_workflows(w, Workflow()) == w


def test_merge_id_collision():
    with pytest.raises(ValueError):
        merge_workflows(wf_single(TaskSpec("md_0")), wf_single(TaskSpec("md_0")))


# ---------------------------------------------------------------------------
# Randomized structure properties

@st.composite
def workflows(draw, max_tasks=50, prefix=""):
    n_pipelines = draw(st.integers(1, 4))
    counter = 0
    pipelines = []
    for p in range(n_pipelines):
        n_stages = draw(st.integers(1, 4))
        stages = []
        for s in range(n_stages):
            n_tasks = draw(st.integers(1, 4))
            tasks = []
            for _ in range(n_tasks):
                if counter >= max_tasks:
                    break
                tasks.append(TaskSpec(f"{prefix}t{counter}"))
                counter += 1
            if tasks:
                stages.append(Stage(f"{prefix}p{p}s{s}", tasks))
        if stages:
            pipelines.append(Pipeline(f"{prefix}p{p}", stages))
    return Workflow(pipelines)


def stage_index_of(wf):
    index = {}
    for pipeline in wf.pipelines:
        for si, stage in enumerate(pipeline.stages):
            for task in stage.tasks:
                index[task.id] = (pipeline, si)
    return index


@given(workflows(), st.data())
def test_ready_never_skips_a_barrier(wf, data):
    ids = sorted(wf.task_ids())
    done = set(data.draw(st.sets(st.sampled_from(ids)))) if ids else set()
    index = stage_index_of(wf)
    for task in ready_tasks(wf, CompletionState(done=done)):
        pipeline, si = index[task.id]
        earlier = [t.id for stage in pipeline.stages[:si] for t in stage.tasks]
        assert all(tid in done for tid in earlier)
        assert task.id not in done


@given(workflows())
def test_marking_ready_done_terminates_in_stage_rounds(wf):
    done = set()
    rounds = 0
    while done != wf.task_ids():
        batch = ready_tasks(wf, CompletionState(done=done))
        assert batch, "no progress with work remaining"
        done.update(t.id for t in batch)
        rounds += 1
    expected = max((len(p.stages) for p in wf.pipelines), default=0)
    assert rounds == expected


@given(workflows(prefix="x"), workflows(prefix="y"), workflows(prefix="z"))
def test_merge_associative_up_to_pipeline_order(wa, wb, wc):
    left = merge_workflows(merge_workflows(wa, wb), wc)
    right = merge_workflows(wa, merge_workflows(wb, wc))
    assert sorted(p.id for p in left.pipelines) == sorted(p.id for p in right.pipelines)
    assert left.task_ids() == right.task_ids()


@given(workflows(prefix="x"), workflows(prefix="y"), st.data())
def test_merge_preserves_constituent_ready_sets(wa, wb, data):
    merged = merge_workflows(wa, wb)
    ids_a = sorted(wa.task_ids())
    done_a = set(data.draw(st.sets(st.sampled_from(ids_a)))) if ids_a else set()
    ready_in_merged = {
        t.id for t in ready_tasks(merged, CompletionState(done=done_a)) if t.id in wa.task_ids()
    }
    ready_alone = {t.id for t in ready_tasks(wa, CompletionState(done=done_a))}
    assert ready_in_merged == ready_alone
