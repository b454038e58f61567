from __future__ import annotations

import pytest
from conftest import read_fixture
from golden_cases import GOLDEN, PEOPLE_REQUEST, central_response, render_all
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bemllm.agents import (
    COMMON_OBJECTS,
    TEMPLATE_NAMES,
    DEFAULT_TEMPLATES,
    RepairSet,
    TemplateSet,
    format_plan,
    format_repair_response,
    parse_central_plan,
    parse_extraction,
    parse_generated,
    parse_repair,
    render_central_prompt,
    render_extraction_prompt,
    render_generation_prompt,
    render_modify_prompt,
    render_repair_prompt,
    render_template,
    template_placeholders,
)
from bemllm.errors import (
    AllRowsInvalid,
    CountExceeded,
    EmptyDescription,
    EmptyErrors,
    EmptyExcerpt,
    EmptyIdf,
    EmptyRequest,
    MissingObjectBlock,
    MissingTupleBlock,
    NoObjectFound,
    NoPlanFound,
    NoTableFound,
    TupleObjectMismatch,
)
from bemllm.idd import idd_excerpt
from bemllm.idf import IdfObject

# sentences each rendered prompt must carry exactly once
DIRECTIVES = {
    "generation": [
        "Set the temperature to 0",
        "If the field is not mandatory and is not defined by the user",
        "If the field is mandatory but not defined by the user",
        "Even though some fields are optional or not defined by the user",
        'comment after "!" for each field',
        "If the rules above conflict with the users' prompt",
        "Which fields are set by user",
        "Which fields are mandatory but not defined",
        "Which fields are set to their default values",
        "Which fields are left blank",
    ],
    "extraction": [
        "object name cannot be the same as object type",
        "Only generate object type mentioned",
        "1) material and construction",
    ],
    "repair": [
        "put it between `` ``",
        "put it between\n//[ ]//",
        "The maximum number of IDF objects generated is 10",
        "strictly kept unchanged",
    ],
    "central": [
        "1. Ask for idf files",
        "2. Based on the user's input, identify the relevant objects",
        "3. Send objects in the form of text",
        "4. Wait for the feedbacks",
        "5. Aggregate the feedback",
    ],
}


def people_excerpt(schema):
    return idd_excerpt(schema, "People")


def assert_substituted(template_name, text):
    for name in template_placeholders(DEFAULT_TEMPLATES.text(template_name)):
        assert "{" + name + "}" not in text


# ---------------------------------------------------------------------------
# templates


def test_every_template_ships():
    for name in TEMPLATE_NAMES:
        assert DEFAULT_TEMPLATES.text(name).strip()


def test_render_template_needs_every_value():
    with pytest.raises(KeyError):
        render_template("{a} and {b}", a="1")
    # substituted text is not rescanned
    assert render_template("{a}", a="{b}") == "{b}"


def test_template_directory_override(tmp_path):
    (tmp_path / "generation.txt").write_text("Only {class_name}: {user_request}\n{idd_excerpt}")
    ts = TemplateSet(tmp_path)
    out = render_generation_prompt("Zone,\n  A1; \\field Name\n", "make one", ts)
    assert out == "Only Zone: make one\nZone,\n  A1; \\field Name"
    assert ts.text("repair") == DEFAULT_TEMPLATES.text("repair")


def test_generation_prompt(schema):
    excerpt = people_excerpt(schema)
    text = render_generation_prompt(excerpt, PEOPLE_REQUEST)
    assert text.startswith("Set the temperature to 0")
    assert f"```\n{excerpt.rstrip()}\n```" in text
    assert '"People"' in text and PEOPLE_REQUEST in text
    assert_substituted("generation", text)
    # braces inside a substituted value are left alone
    braced = render_generation_prompt(excerpt, "set {idd_excerpt} to 10 {W}")
    assert '"set {idd_excerpt} to 10 {W}"' in braced


def test_generation_prompt_errors(schema):
    with pytest.raises(EmptyExcerpt):
        render_generation_prompt("  \n", PEOPLE_REQUEST)
    with pytest.raises(EmptyRequest):
        render_generation_prompt(people_excerpt(schema), " ")
    with pytest.raises(EmptyExcerpt):
        render_generation_prompt("! just a comment\n", PEOPLE_REQUEST)


def test_modify_prompt_errors(schema):
    with pytest.raises(EmptyExcerpt):
        render_modify_prompt("", "People, P;", "change it")
    with pytest.raises(EmptyRequest):
        render_modify_prompt(people_excerpt(schema), "People, P;", "")


def test_extraction_prompt():
    description = read_fixture("iunit/description.txt")
    text = render_extraction_prompt(description)
    assert description.strip() in text
    assert "material and construction" in text
    assert text.rstrip().endswith(", ".join(COMMON_OBJECTS))
    assert render_extraction_prompt("a small shed", []).rstrip().endswith("(unrestricted)")
    with pytest.raises(EmptyDescription):
        render_extraction_prompt("\n\t")


def test_repair_prompt():
    text = render_repair_prompt("** Severe ** something broke", "Version, 23.2;")
    assert "strictly kept unchanged" in text
    assert text.rstrip().endswith("``Version, 23.2;``")
    with pytest.raises(EmptyErrors):
        render_repair_prompt("", "Version, 23.2;")
    with pytest.raises(EmptyIdf):
        render_repair_prompt("** Severe ** x", "  ")


def test_central_prompt():
    text = render_central_prompt("make the walls thicker")
    assert '"make the walls thicker"' in text and "(not provided)" in text
    with pytest.raises(EmptyRequest):
        render_central_prompt("")


@pytest.mark.parametrize("name", sorted(n for n in render_all()))
def test_golden_file(name):
    rendered = render_all()[name]
    assert rendered == (GOLDEN / name).read_text(encoding="utf-8"), (
        f"{name} differs from its golden copy; run tools/update_goldens.py if the change is intended"
    )


def test_directives_appear_once():
    rendered = render_all()
    by_template = {
        "generation": rendered["generation_people.txt"],
        "extraction": rendered["extraction_iunit.txt"],
        "repair": rendered["repair_seeded_fault.txt"],
        "central": rendered["central_modify.txt"],
    }
    for template, text in by_template.items():
        assert_substituted(template, text)
        for sentence in DIRECTIVES[template]:
            assert text.count(sentence) == 1, (template, sentence)


# ---------------------------------------------------------------------------
# extraction


def test_extraction_rejects_name_equal_to_type():
    response = "{('Material', 'material'): 'a layer', ('Material', 'Brick'): 'a brick layer'}"
    table = parse_extraction(response)
    assert table.pairs() == [("Material", "Brick")]
    assert len(table.diagnostics) == 1 and "equals its object type" in table.diagnostics[0]


def test_extraction_allowed_list_and_schema(schema):
    response = """Here you go:
    ('people', 'Crew'): 'two people',
    ('Lights', 'Lamps'): '5 W/m2',
    ('Fan:OnOff', 'Fan'): 'a fan',
    """
    table = parse_extraction(response, allowed=["People", "Lights"], schema=schema)
    assert table.pairs() == [("People", "Crew"), ("Lights", "Lamps")]
    assert len(table.diagnostics) == 1


def test_extraction_failures():
    with pytest.raises(NoTableFound):
        parse_extraction("I could not find any objects, sorry.")
    with pytest.raises(AllRowsInvalid):
        parse_extraction("{('Zone', 'zone'): 'x'}")
    assert len(parse_extraction("Nothing applies: {}")) == 0


def test_extraction_order_and_invariants(schema):
    table = parse_extraction(read_fixture("iunit/agent1_response.txt"), COMMON_OBJECTS, schema)
    assert table.items[21].object_type == "People" and table.items[21].object_name == "People_iUnit"
    for item in table:
        assert item.object_name.lower() != item.object_type.lower()
        assert item.object_type in COMMON_OBJECTS


# ---------------------------------------------------------------------------
# generation responses


def test_parse_generated_fenced_and_bare():
    fenced = "Sure.\n```idf\nPeople,\n  TBD1234567890,  !- Name\n  Office;  !- Zone\n```\nFields set by user: (none)\n"
    got = parse_generated(fenced)
    assert got.objects[0].texts() == ["TBD1234567890", "Office"]
    bare = "Here it is:\nLights,\n  L1,\n  Office;\nThat is all."
    assert parse_generated(bare, ["Lights"]).objects[0].name == "L1"
    with pytest.raises(NoObjectFound):
        parse_generated("no objects here", ["Lights"])


# ---------------------------------------------------------------------------
# repair responses

ONE_REPAIR = "``People, People_iUnit, Zone1, Occupancy, People, 2;`` //[('People','People_iUnit')]//"


def test_parse_repair_single(schema):
    repair = parse_repair(ONE_REPAIR, schema)
    assert len(repair.corrected_objects) == 1
    assert repair.targets == (("People", "People_iUnit"),)
    (cls, name, obj), = repair.pairs(schema)
    assert (cls, name, obj.name) == ("People", "People_iUnit", "People_iUnit")


def test_parse_repair_limits(schema):
    objs = "\n".join(f"Material:NoMass, M{i}, Rough, 1.0;" for i in range(11))
    tuples = ", ".join(f"('Material:NoMass', 'M{i}')" for i in range(11))
    with pytest.raises(CountExceeded):
        parse_repair(f"``{objs}``\n//[{tuples}]//", schema)
    ten_objs = "\n".join(f"Material:NoMass, M{i}, Rough, 1.0;" for i in range(10))
    ten = ", ".join(f"('Material:NoMass', 'M{i}')" for i in range(10))
    assert len(parse_repair(f"``{ten_objs}``\n//[{ten}]//", schema).targets) == 10


def test_parse_repair_mismatch_and_missing_blocks(schema):
    with pytest.raises(TupleObjectMismatch):
        parse_repair("``People, Someone_Else, Zone1;`` //[('People','People_iUnit')]//", schema)
    with pytest.raises(MissingObjectBlock):
        parse_repair("//[('People','People_iUnit')]//")
    with pytest.raises(MissingTupleBlock):
        parse_repair("``People, People_iUnit, Zone1;``")


names = st.from_regex(r"\A[A-Za-z][A-Za-z0-9_ \-]{0,14}[A-Za-z0-9]\Z")
numbers = st.floats(min_value=0.01, max_value=50, allow_nan=False).map(lambda v: f"{v:.3f}")


@st.composite
def repair_sets(draw):
    picked = draw(st.lists(names, min_size=1, max_size=10, unique_by=str.lower))
    objects = tuple(
        IdfObject.of("Material:NoMass", n, draw(st.sampled_from(["Rough", "Smooth"])), draw(numbers))
        for n in picked
    )
    order = draw(st.permutations(picked))
    return RepairSet(objects, tuple(("Material:NoMass", n) for n in order))


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(repair_sets())
def test_repair_round_trip(schema, repair):
    back = parse_repair(format_repair_response(repair, schema), schema)
    assert back.targets == repair.targets
    assert [o.texts() for o in back.corrected_objects] == [o.texts() for o in repair.corrected_objects]
    assert [o.class_name for o in back.corrected_objects] == [o.class_name for o in repair.corrected_objects]


# ---------------------------------------------------------------------------
# central plan


def test_recorded_central_plan():
    plan = parse_central_plan(central_response())
    assert len(plan) == 3
    assert [(j.action, j.object_type, j.object_name) for j in plan[0].jobs] == [("create", "People", "ZONE ONE PEOPLE")]
    assert [(j.action, j.object_type) for j in plan[1].jobs] == [("create", "Schedule:Compact"), ("modify", "Exterior:Lights")]
    assert [(j.action, j.object_type, j.object_name) for j in plan[2].jobs] == [("modify", "Material:NoMass", "R13LAYER")]
    assert parse_central_plan(format_plan(plan)) == plan


def test_single_edit_plan():
    plan = parse_central_plan("//[('widen the window', [('modify', 'Window', 'W1', 'Make it 2 m wide.')])]//")
    assert len(plan) == 1 and plan[0].jobs[0].object_name == "W1"


def test_plan_errors():
    with pytest.raises(NoPlanFound):
        parse_central_plan("I would change the walls.")
    with pytest.raises(NoPlanFound):
        parse_central_plan("//[('x', [('delete', 'Zone', 'Z', 'remove it')])]//")
    with pytest.raises(NoPlanFound):
        parse_central_plan("//[('x', [('create', 'Zone')])]//")
