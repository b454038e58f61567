from __future__ import annotations

import json

import pytest
from conftest import TRIALS, load_idf, read_fixture, replay, run_trial, trial_config

from bemllm.errors import ExtractionFailed, GenerationFailed, RepairExhausted, RepairParseFailed
from bemllm.idf import find_objects, reference_audit, serialize
from bemllm.llm import ScriptedBackend
from bemllm.pipeline import Outcome, Pipeline, PipelineConfig, RunLog, debug_loop
from bemllm.simulator import MockRunner

MODIFY_REQUEST = (
    "Here is the IDF file and I want to 1) create a people object for the only zone, "
    "2) add a schedule for exterior lights that starts at 6:00 PM and ends at 6:00 AM, "
    "and 3) change the R13 layer to be R15."
)


def scripted(fn):
    return ScriptedBackend(fn)


def test_config_bounds():
    with pytest.raises(ValueError):
        PipelineConfig(max_repair_iterations=0)
    with pytest.raises(ValueError):
        PipelineConfig(max_objects_per_repair=11)
    with pytest.raises(ValueError):
        PipelineConfig(max_objects_per_repair=0)
    with pytest.raises(ValueError):
        PipelineConfig(workers=0)
    assert PipelineConfig().max_objects_per_repair == 10


# ---------------------------------------------------------------------------
# generation


@pytest.mark.parametrize("trial", TRIALS)
def test_trial_repairs_converge(schema, trial):
    final, runlog = run_trial(schema, trial)
    assert runlog.outcome is Outcome.Clean
    assert len(runlog.extraction) == 29
    assert len(runlog.per_object) == 29 and all(o.error is None for o in runlog.per_object)
    counts = [r.severe_or_fatal for r in runlog.repair_rounds] + [runlog.final_severe_or_fatal]
    assert counts == sorted(counts, reverse=True)
    assert 1 <= len(runlog.repair_rounds) <= PipelineConfig().max_repair_iterations
    audit = reference_audit(final, schema)
    assert audit.clean


def test_trial_with_retry_records_both_attempts(schema):
    _, runlog = run_trial(schema, 5)
    retried = [o for o in runlog.per_object if len(o.attempts) == 2]
    assert [o.item.object_name for o in retried] == ["People_iUnit"]
    first, second = retried[0].attempts
    assert not first.ok and second.ok
    assert first.prompt_digest != second.prompt_digest


def test_parallel_generation_matches_sequential(schema):
    parallel, _ = run_trial(schema, 9)
    pipe = Pipeline(schema, replay("iunit_trial09"), MockRunner(schema), PipelineConfig(seed=9))
    sequential, _ = pipe.generate_idf(read_fixture("iunit/description.txt"), load_idf("iunit/initial.idf"))
    assert serialize(parallel, schema) == serialize(sequential, schema)
    assert trial_config(9).parallel_generation


def test_empty_extraction_leaves_document_unchanged(schema):
    initial = load_idf("simple_1zone.idf")
    chat = scripted(lambda req: "None of the listed objects apply: {}")
    final, runlog = Pipeline(schema, chat).generate_idf("an empty lot", initial)
    assert final.objects == initial.objects
    assert runlog.extraction == [] and runlog.repair_rounds == []
    assert runlog.outcome is Outcome.Clean


def test_unreadable_extraction_fails_after_retry(schema):
    calls = []
    chat = scripted(lambda req: calls.append(req.tag) or "I am not sure what you mean.")
    with pytest.raises(ExtractionFailed):
        Pipeline(schema, chat).generate_idf("a house", load_idf("simple_1zone.idf"))
    assert calls == ["agent1:extract:attempt1", "agent1:extract:attempt2"]


def test_generation_failure_aborts(schema):
    def respond(req):
        if req.tag.startswith("agent1"):
            return "{('Lights', 'Lamps'): '5 W/m2 in the only zone'}"
        return "Sorry, I cannot produce that object."

    with pytest.raises(GenerationFailed) as info:
        Pipeline(schema, scripted(respond)).generate_idf("a shed", load_idf("simple_1zone.idf"))
    assert info.value.args


# ---------------------------------------------------------------------------
# modification


def test_modify_missing_target_keeps_other_entries(schema):
    doc = load_idf("simple_1zone.idf")
    request = MODIFY_REQUEST.replace("R13 layer", "R19 layer")
    final, runlog = Pipeline(schema, replay("modify_missing_target")).modify_idf(doc, request)
    assert len(runlog.failures) == 1 and "R19LAYER" in runlog.failures[0]
    assert find_objects(final, "People", "ZONE ONE PEOPLE", schema)
    assert find_objects(final, "Schedule:Compact", "NewSchedule", schema)
    (_, r13), = find_objects(final, "Material:NoMass", "R13LAYER", schema)
    (_, before), = find_objects(doc, "Material:NoMass", "R13LAYER", schema)
    assert r13 == before
    assert runlog.outcome is Outcome.Clean


def test_modify_rejects_empty_request(schema):
    with pytest.raises(ValueError):
        Pipeline(schema, scripted(lambda r: "")).modify_idf(load_idf("simple_1zone.idf"), "  ")


def test_modify_plan_logged(schema):
    _, runlog = Pipeline(schema, replay("modify_simple")).modify_idf(load_idf("simple_1zone.idf"), MODIFY_REQUEST)
    assert len(runlog.plan) == 3
    assert [o.action for o in runlog.per_object] == ["create", "create", "modify", "modify"]


# ---------------------------------------------------------------------------
# repair loop


def test_clean_document_needs_no_rounds(schema):
    doc = load_idf("simple_1zone.idf")
    final, rounds, runlog = debug_loop(doc, schema=schema, chat=scripted(lambda r: pytest.fail("no call expected")))
    assert rounds == [] and final.objects == doc.objects
    assert runlog.outcome is Outcome.Clean


def test_seeded_dangling_fixed_in_one_round(schema):
    final, rounds, runlog = debug_loop(load_idf("seeded_dangling.idf"), schema=schema, chat=replay("seeded_dangling"))
    assert runlog.outcome is Outcome.Clean
    assert len(rounds) == 1
    assert rounds[0].targets == [("Exterior:Lights", "ExtLights")]
    assert len(rounds[0].changed_indices) == 1
    assert reference_audit(final, schema).clean


def test_count_exceeded_reprompts(schema):
    _, rounds, runlog = debug_loop(load_idf("seeded_dangling.idf"), schema=schema, chat=replay("repair_count_exceeded"))
    assert runlog.outcome is Outcome.Clean
    assert len(rounds) == 1 and rounds[0].reprompted


def test_seeded_fault_substitutes_placeholder(schema):
    _, rounds, runlog = debug_loop(load_idf("seeded_fault.idf"), schema=schema, chat=replay("seeded_fault"))
    assert runlog.outcome is Outcome.Clean
    assert len(runlog.substitutions) == 1
    assert runlog.substitutions[0].token.startswith("TBD")


def _echo_repair(req):
    # hands back the faulty Exterior:Lights object untouched, so nothing improves
    return "``Exterior:Lights, ExtLights, NightSchedule, 14804, ScheduleNameOnly, Exterior Facade Lighting;``\n" \
           "//[('Exterior:Lights', 'ExtLights')]//"


def test_rounds_bounded_and_strict_mode(schema):
    doc = load_idf("seeded_dangling.idf")
    config = PipelineConfig(max_repair_iterations=2)
    _, rounds, runlog = debug_loop(doc, config, schema=schema, chat=scripted(_echo_repair))
    assert len(rounds) == 2
    assert runlog.outcome is Outcome.MaxIterationsExceeded
    assert runlog.final_severe_or_fatal > 0
    with pytest.raises(RepairExhausted):
        debug_loop(doc, PipelineConfig(max_repair_iterations=1, strict=True), schema=schema, chat=scripted(_echo_repair))


def test_unreadable_repair(schema):
    with pytest.raises(RepairParseFailed):
        debug_loop(load_idf("seeded_dangling.idf"), schema=schema, chat=scripted(lambda r: "I would fix the schedule."))


def test_per_repair_object_limit(schema):
    calls = []

    def respond(req):
        calls.append(req.tag)
        return _echo_repair(req)

    config = PipelineConfig(max_repair_iterations=1, max_objects_per_repair=1)
    debug_loop(load_idf("seeded_dangling.idf"), config, schema=schema, chat=scripted(respond))
    assert calls == ["agent3:round1:attempt1"]


# ---------------------------------------------------------------------------
# run log


def test_runlog_jsonl(schema):
    _, runlog = run_trial(schema, 4)
    lines = runlog.to_jsonl().splitlines()
    records = [json.loads(line) for line in lines]
    assert records[-1] == {"event": "outcome", "outcome": "Clean", "report": runlog.final_report, "severe_or_fatal": 0}
    events = [r["event"] for r in records]
    assert events.count("extraction") == 29 and events.count("object") == 29
    assert events.count("repair_round") == 3
    assert all(line == json.dumps(json.loads(line), sort_keys=True) for line in lines)
    assert RunLog().to_jsonl().count("\n") == 1
