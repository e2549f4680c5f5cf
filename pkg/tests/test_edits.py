import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgpgi.gi.edits import (DEFAULT_KINDS, Edit, Patch, apply_edit, apply_patch, parse_edit,
                            parse_patch, random_edit)
from lgpgi.gi.scenario import DATA
from lgpgi.gi.tree import GAP, NodeRef, SourceTree, parse_source

HERE = Path(__file__).parent / "data"
FILES = ["eval.toy.xml", "eval_diffs.toy.xml", "diffs.toy.xml", "intrinsics.toy.xml"]
EVAL = "eval.toy.xml"

FIX = ("SrcmlNumericSetting(('eval.toy.xml', 'number', 4), '0') | "
       "SrcmlNumericSetting(('eval.toy.xml', 'number', 9), '0') | "
       "SrcmlComparisonOperatorSetting(('eval.toy.xml', 'operator_comp', 4), '>=')")


def load(name, read_only=False):
    return SourceTree.load(Path(str(DATA / name)), read_only=read_only)


@pytest.fixture
def trees():
    t = {EVAL: load(EVAL)}
    for f in FILES[1:]:
        t[f] = load(f, read_only=True)
    return t


def changed_lines(before: str, after: str):
    a, b = before.splitlines(), after.splitlines()
    assert len(a) == len(b)
    return [(x.strip(), y.strip()) for x, y in zip(a, b) if x != y]


# trees

@pytest.mark.parametrize("name", FILES)
def test_node_counts_match_manifest(name):
    manifest = json.loads((HERE / "fixture_manifest.json").read_text())
    tree = load(name)
    assert {tag: tree.count(tag) for tag in manifest[name]} == manifest[name]


@pytest.mark.parametrize("name", FILES)
def test_render_reparse_round_trip(name):
    tree = load(name)
    again = SourceTree.from_source(tree.render(), name)
    assert again.render() == tree.render()
    assert again.to_xml() == SourceTree.from_source(again.render(), name).to_xml()


def test_xml_and_source_inputs_agree():
    tree = load(EVAL)
    assert parse_source(tree.to_xml(), EVAL).render() == parse_source(tree.render(), EVAL).render()


def test_malformed_xml_raises():
    with pytest.raises(Exception):
        parse_source("<unit><stmt></unit>", "bad.xml")


def test_noderef_resolution_bounds():
    tree = load(EVAL)
    n = tree.count("stmt")
    assert tree.resolve("stmt", n - 1) is not None
    assert tree.resolve("stmt", n) is None
    assert tree.resolve("stmt", -1) is None


def test_gap_slots_cover_each_block():
    tree = load(EVAL)
    blocks = list(tree.root.iter("block"))
    stmts_in_blocks = sum(len([c for c in b if c.tag == "stmt"]) for b in blocks)
    assert tree.count(GAP) == stmts_in_blocks + len(blocks)


# patch text

def test_patch_text_round_trip():
    p = parse_patch(FIX)
    assert str(p) == FIX
    assert len(p) == 3
    assert p.edits[2] == Edit("SrcmlComparisonOperatorSetting",
                              NodeRef(EVAL, "operator_comp", 4), ">=")


def test_params_are_part_of_the_key():
    p = parse_patch(FIX)
    q = p.with_param("WIDTH", 16)
    assert q.key != p.key
    assert parse_patch(str(q)) == q
    assert q.param_dict() == {"WIDTH": 16}


def test_edit_order_is_significant_in_key():
    a, b, _ = parse_patch(FIX).edits
    assert Patch.of([a, b]).key != Patch.of([b, a]).key


def test_empty_patch_text():
    assert parse_patch("") == Patch()
    assert str(Patch()) == ""


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_edit("NotAnEdit(('x', 'stmt', 1))")
    with pytest.raises(ValueError):
        parse_patch("SrcmlNumericSetting(('eval.toy.xml', 'number', 4)")


# applying

def test_comparison_setting_on_dispatch(trees):
    before = trees[EVAL].render()
    out, ok = apply_edit(trees, parse_edit(
        "SrcmlComparisonOperatorSetting(('eval.toy.xml', 'operator_comp', 4), '>=')"))
    assert ok
    assert changed_lines(before, out[EVAL].render()) == [
        ("} else if (op == 3) {", "} else if (op >= 3) {")]


def test_numeric_setting_on_mask(trees):
    before = trees[EVAL].render()
    out, ok = apply_edit(trees, parse_edit("SrcmlNumericSetting(('eval.toy.xml', 'number', 4), '0')"))
    assert ok
    [(old, new)] = changed_lines(before, out[EVAL].render())
    assert "0xAAAAAAAAAAAAAAAA" in old and "mask_blend_epi8(0, aa" in new


def test_fixed_patch_makes_three_changes(trees):
    before = trees[EVAL].render()
    out, flags = apply_patch(trees, parse_patch(FIX))
    assert flags == [True, True, True]
    diff = changed_lines(before, out[EVAL].render())
    assert len(diff) == 3
    assert sum("mask_blend_epi8(0, aa" in new for _, new in diff) == 2
    assert any("op >= 3" in new for _, new in diff)


def test_identity_numeric_setting(trees):
    before = trees[EVAL].render()
    current = trees[EVAL].resolve("number", 4).text
    out, ok = apply_edit(trees, Edit("SrcmlNumericSetting", NodeRef(EVAL, "number", 4), current))
    assert ok and out[EVAL].render() == before


@pytest.mark.parametrize("step,expect", [("+1", "4"), ("-1", "2"), ("*2", "6"), ("/2", "1")])
def test_relative_numeric_setting(step, expect):
    tree = SourceTree.from_source("void f() { int a = 3; }", "t")
    out, ok = apply_edit({"t": tree}, Edit("SrcmlRelativeNumericSetting", NodeRef("t", "number", 0), step))
    assert ok and out["t"].resolve("number", 0).text == expect


def test_non_numeric_literal_is_not_applied(trees):
    _, ok = apply_edit(trees, Edit("SrcmlNumericSetting", NodeRef(EVAL, "number", 0), "x"))
    assert not ok


def test_unresolvable_edit_is_skipped(trees):
    before = trees[EVAL].render()
    p = Patch.of([Edit("SrcmlStmtDeletion", NodeRef(EVAL, "stmt", 10_000)),
                  Edit("SrcmlStmtDeletion", NodeRef("missing.xml", "stmt", 0))])
    out, flags = apply_patch(trees, p)
    assert flags == [False, False]
    assert out[EVAL].render() == before


def test_read_only_target_is_refused(trees):
    before = trees["diffs.toy.xml"].render()
    out, ok = apply_edit(trees, Edit("SrcmlStmtDeletion", NodeRef("diffs.toy.xml", "stmt", 0)))
    assert not ok
    assert out["diffs.toy.xml"].render() == before


def test_inputs_are_never_modified(trees):
    snapshot = {f: t.to_xml() for f, t in trees.items()}
    apply_patch(trees, parse_patch(FIX + " | SrcmlStmtDeletion(('eval.toy.xml', 'stmt', 3))"))
    assert {f: t.to_xml() for f, t in trees.items()} == snapshot


def test_replacement_from_ingredient(trees):
    payload = trees["diffs.toy.xml"].resolve("stmt", 0)
    before = trees[EVAL].render()
    out, ok = apply_edit(trees, Edit("SrcmlStmtReplacement", NodeRef(EVAL, "stmt", 0),
                                     NodeRef("diffs.toy.xml", "stmt", 0)))
    assert ok
    text = "".join(payload.itertext())
    assert text in out[EVAL].render() and text not in before


def test_delete_then_insert_matches_golden(trees):
    import difflib

    golden = (HERE / "delete_insert.golden").read_text()
    base = trees[EVAL].render().splitlines(keepends=True)
    parts = []
    for line in golden.splitlines():
        if line.startswith("# "):
            parts.append(line[2:])
    assert len(parts) == 2
    out = []
    for text in parts:
        new, flags = apply_patch(trees, parse_patch(text))
        assert all(flags)
        out.append(f"# {text}\n")
        out.append("".join(difflib.unified_diff(base, new[EVAL].render().splitlines(keepends=True),
                                                "eval.toy", "patched", n=1)))
    assert "".join(out) == golden


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_apply_patch_is_deterministic(seed):
    trees = {EVAL: load(EVAL), "diffs.toy.xml": load("diffs.toy.xml", True)}
    rng = np.random.default_rng(seed)
    edits = [random_edit(rng, [trees[EVAL]], [trees["diffs.toy.xml"]]) for _ in range(5)]
    p = Patch.of(edits)
    a, fa = apply_patch(trees, p)
    b, fb = apply_patch(trees, parse_patch(str(p)))
    assert fa == fb
    assert a[EVAL].render() == b[EVAL].render()


# sampling

def test_numeric_only_weights():
    rng = np.random.default_rng(0)
    t = load(EVAL)
    kinds = {random_edit(rng, [t], weights={"SrcmlNumericSetting": 1}).kind for _ in range(500)}
    assert kinds == {"SrcmlNumericSetting"}


def test_value_pool_override():
    rng = np.random.default_rng(1)
    t = load(EVAL)
    vals = {random_edit(rng, [t], weights={"SrcmlNumericSetting": 1},
                        values={"SrcmlNumericSetting": ["7"]}).payload for _ in range(50)}
    assert vals == {"7"}


def test_no_enabled_kind_raises():
    with pytest.raises(ValueError):
        random_edit(np.random.default_rng(0), [load(EVAL)], weights={"SrcmlNumericSetting": 0})


def test_targets_never_read_only(trees):
    rng = np.random.default_rng(2)
    targets = [trees[EVAL]]
    ingredients = [trees[f] for f in FILES[1:]]
    files = Counter(random_edit(rng, targets, ingredients).target.file for _ in range(100_000))
    assert set(files) == {EVAL}


def test_payload_provenance_covers_ingredients(trees):
    rng = np.random.default_rng(3)
    targets = [trees[EVAL]]
    ingredients = [trees[f] for f in FILES[1:]]
    sources = Counter()
    for _ in range(10_000):
        e = random_edit(rng, targets, ingredients)
        if isinstance(e.payload, NodeRef):
            sources[e.payload.file] += 1
    assert set(sources) == set(FILES)
    assert min(sources.values()) > 500


def test_default_kinds_all_sampled():
    rng = np.random.default_rng(4)
    t = load(EVAL)
    assert {random_edit(rng, [t]).kind for _ in range(2000)} == set(DEFAULT_KINDS)
