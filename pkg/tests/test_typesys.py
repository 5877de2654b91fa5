from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import compile_source
from typeforge.errors import CoercionError, TypeCheckFailed
from typeforge.frontend import SourceProgram, parse
from typeforge.typesys import (
    CommMode, Mutability, Placement, TypeEnvironment, VarInfo, coerce, parse_chain, resolve, typecheck, with_scope,
)

ELEMENTS = ("Int", "Double", "Char", "Bool")
ARRAY = "array[Double, 8, 8, 8] :: allocated[grid[2, 1, 1] :: single[evendist]]"
HALO_ARRAY = "array[Double, 8, 8, 8] :: allocated[grid[halo[1], 2, 1, 1] :: single[evendist]]"


def R(text: str):
    return resolve(parse_chain(text))


# -- resolution examples --------------------------------------------------------


def test_plain_grid_chain():
    consts = {"nx": 16, "ny": 12, "nz": 8, "x": 2, "y": 1, "z": 1}
    a = resolve(parse_chain("array[Double,nx,ny,nz]::allocated[grid[x,y,z]::single[evendist]]", consts))
    assert a.element == "Double" and a.shape == (16, 12, 8)
    assert a.partition == (2, 1, 1) and a.distribution == "EvenDist"
    assert a.placement is Placement.DISTRIBUTED
    assert a.halo_depth == 0 and a.comm_mode is CommMode.ONE_SIDED
    assert a.mutability is Mutability.READ_WRITE


@pytest.mark.parametrize(
    "grid, depth, mode",
    [
        ("grid[halo[1], 2, 1, 1]", 1, CommMode.HALO_SYNC),
        ("grid[halo[1] :: async, 2, 1, 1]", 1, CommMode.HALO_ASYNC),
        ("grid[halo[1] :: async :: racy, 2, 1, 1]", 1, CommMode.HALO_RACY),
        ("grid[halo[0], 2, 1, 1]", 0, CommMode.ONE_SIDED),
    ],
)
def test_halo_variants(grid, depth, mode):
    a = R(f"array[Double, 8, 8, 8] :: allocated[{grid} :: single[evendist]]")
    assert (a.halo_depth, a.comm_mode) == (depth, mode)


def test_defaults():
    a = R("Int")
    assert a.placement is Placement.REPLICATED and a.comm_mode is CommMode.ONE_SIDED
    assert a.mutability is Mutability.READ_WRITE and a.halo_depth == 0 and a.shape == ()
    b = R("Int :: allocated[single[on[3]]]")
    assert b.placement is Placement.ON_PROCESS and b.owner == 3


def test_const_writable_round_trip():
    c = parse_chain("Char")
    constant = coerce(c, parse_chain("const"))
    assert str(constant) == "Char :: const"
    assert resolve(constant).readonly
    again = coerce(constant, parse_chain("writable"))
    assert str(again) == "Char :: const :: writable"
    assert resolve(again).mutability is Mutability.READ_WRITE


@pytest.mark.parametrize(
    "text",
    [
        "Int :: foo",
        "array[Double, 4] :: allocated[grid[0] :: single[evendist]]",
        "Int :: on[1]",
        "Int :: allocated[single[evendist]]",
        "array[Double, 4] :: allocated[grid[halo[1], 2, 2] :: single[evendist]]",
        "Int :: halo[1]",
        "array[Double, 4] :: allocated[grid[halo[1] :: racy, 2] :: single[evendist]]",
        "array[Double, 4] :: allocated[grid[2] :: single[evendist]] :: async",
        "Int :: channel[1]",
        "const[2]",
        "Int :: allocated[grid[2] :: single[on[1]]]",
    ],
)
def test_invalid_chains(text):
    with pytest.raises(CoercionError):
        R(text)


# -- precedence: the rightmost link governing an attribute wins -------------------

# (base chain, link, attributes the link governs)
GOVERNS = {
    "const": ("mutability",),
    "writable": ("mutability",),
    "halo[1]": ("halo_depth", "comm_mode"),
    "halo[2]": ("halo_depth", "comm_mode"),
    "async": ("comm_mode",),
    "channel[0, 1]": ("comm_mode", "channel"),
    "channel[2, 3]": ("comm_mode", "channel"),
}
ARRAY_LINKS = list(GOVERNS)
SCALAR_LINKS = ["const", "writable", "channel[0, 1]", "channel[2, 3]",
                "allocated[single[on[1]]]", "allocated[single[on[2]]]"]
SCALAR_GOVERNS = {**GOVERNS, "allocated[single[on[1]]]": ("placement", "owner"),
                  "allocated[single[on[2]]]": ("placement", "owner")}


def _shared(a: str, b: str, table) -> tuple[str, ...]:
    return tuple(x for x in table[a] if x in table[b])


ARRAY_PAIRS = [(a, b) for a, b in itertools.product(ARRAY_LINKS, repeat=2) if _shared(a, b, GOVERNS)]
SCALAR_PAIRS = [(a, b) for a, b in itertools.product(SCALAR_LINKS, repeat=2) if _shared(a, b, SCALAR_GOVERNS)]


@pytest.mark.parametrize("first, second", ARRAY_PAIRS)
def test_rightmost_wins_on_arrays(first, second):
    both = R(f"{HALO_ARRAY} :: {first} :: {second}")
    alone = R(f"{HALO_ARRAY} :: {second}")
    for attr in _shared(first, second, GOVERNS):
        assert getattr(both, attr) == getattr(alone, attr)


@pytest.mark.parametrize("first, second", SCALAR_PAIRS)
def test_rightmost_wins_on_scalars(first, second):
    both = R(f"Int :: {first} :: {second}")
    alone = R(f"Int :: {second}")
    for attr in _shared(first, second, SCALAR_GOVERNS):
        assert getattr(both, attr) == getattr(alone, attr)


@pytest.mark.parametrize("first, second", [("grid[2, 1, 1]", "grid[1, 2, 1]"), ("grid[1, 1, 2]", "grid[2, 1, 1]")])
def test_rightmost_partition_wins(first, second):
    a = R(f"array[Double, 8, 8, 8] :: allocated[{first} :: single[evendist]] :: allocated[{second} :: single[evendist]]")
    assert a.partition == R(f"array[Double, 8, 8, 8] :: allocated[{second} :: single[evendist]]").partition
    b = R(f"array[Double, 8, 8, 8] :: allocated[{first} :: {second} :: single[evendist]]")
    assert b.partition == a.partition


def test_rightmost_halo_argument_wins():
    a = R("array[Double, 8, 8, 8] :: allocated[grid[halo[1] :: halo[2], 2, 1, 1] :: single[evendist]]")
    assert a.halo_depth == 2


def test_rightmost_owner_inside_single():
    assert R("Int :: allocated[single[evendist :: on[2]]]").owner == 2


@pytest.mark.parametrize("first, second", list(itertools.product(ELEMENTS + ("array[Int, 4]",), ELEMENTS)))
def test_two_element_kinds_rejected(first, second):
    with pytest.raises(CoercionError, match="meaningless"):
        coerce(parse_chain(first), parse_chain(second))


@given(
    prefix=st.lists(st.sampled_from(ARRAY_LINKS), max_size=4),
    pair=st.sampled_from(ARRAY_PAIRS),
)
def test_precedence_after_any_prefix(prefix, pair):
    first, second = pair
    base = " :: ".join([HALO_ARRAY, *prefix])
    both = R(f"{base} :: {first} :: {second}")
    alone = R(f"{base} :: {second}")
    for attr in _shared(first, second, GOVERNS):
        assert getattr(both, attr) == getattr(alone, attr)


@given(st.lists(st.sampled_from(ARRAY_LINKS), min_size=1, max_size=5))
def test_coerce_matches_hand_built_chain(links):
    chain = parse_chain(HALO_ARRAY)
    for link in links:
        chain = coerce(chain, parse_chain(link))
    assert resolve(chain) == R(" :: ".join([HALO_ARRAY, *links]))


# -- checking programs -------------------------------------------------------------


def _errors(text: str) -> list[str]:
    try:
        compile_source(text)
    except TypeCheckFailed as exc:
        return [d.message for d in exc.errors]
    return []


def test_write_to_constant_rejected():
    assert any("read-only" in e for e in _errors("var a : Int :: const; a := 5;"))


def test_statement_scoped_writable():
    assert _errors("var a : Int :: const; (a :: writable) := 99;") == []
    # the coercion lasts for one statement only
    assert any("read-only" in e for e in _errors("var a : Int :: const; (a :: writable) := 99; a := 1;"))


def test_plain_int():
    typed = compile_source("var a : Int; a := 5;")
    (decl, _) = typed.ast.statements
    assert typed.decl_attrs[id(decl)].mutability is Mutability.READ_WRITE


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("x := 1;", "undeclared"),
        ("var a : Int; a[1] := 2;", "cannot index"),
        ("var a : Int :: Char;", "meaningless"),
        ("var d : array[Double,4] :: allocated[grid[2] :: single[evendist]]; zeroGrid(d, d);", "argument"),
        ("var n : Int; var d : array[Double,n] :: allocated[grid[2] :: single[evendist]];", "constant"),
        ("var a : Int :: channel[0, 1];", "channel"),
    ],
)
def test_type_errors(text, fragment):
    errors = _errors(text)
    assert errors and any(fragment in e for e in errors), errors


def test_diagnostics_are_sorted_and_formatted():
    with pytest.raises(TypeCheckFailed) as info:
        compile_source("var a : Int :: const;\nb := 1;\na := 2;", "prog.msh")
    lines = str(info.value).splitlines()
    assert lines[0].startswith("prog.msh:2:1: error:")
    assert lines[1].startswith("prog.msh:3:1: error:")


def test_typecheck_is_deterministic(listing):
    ast = parse(SourceProgram(listing("listing3")))
    a, b = typecheck(ast), typecheck(ast)
    assert [a.decl_attrs[k] for k in sorted(a.decl_attrs)] == [b.decl_attrs[k] for k in sorted(b.decl_attrs)]


# -- lexical scoping of retypes ------------------------------------------------------


def test_retype_reverts_after_block():
    ok = "var a : Int :: const; { a : a :: writable; a := 1; };"
    assert _errors(ok) == []
    assert any("read-only" in e for e in _errors(ok + " a := 2;"))


def test_nested_retypes_revert_in_lifo_order():
    for depth in (1, 2, 3):
        opens = "".join(f"{{ a : a :: {'writable' if d % 2 == 0 else 'const'}; " for d in range(depth))
        closes = "}; " * depth
        inner_mutable = depth % 2 == 1
        program = f"var a : Int :: const; {opens} a := 1; {closes}"
        assert (_errors(program) == []) == inner_mutable


def test_with_scope_restores_environment():
    env = TypeEnvironment()
    chain = parse_chain("Int :: const")
    env.declare(VarInfo("a", chain, resolve(chain)))
    before = env.snapshot()

    def action(e, _block):
        c = coerce(chain, parse_chain("writable"))
        e.retype("a", c, resolve(c))
        assert not e.lookup("a").attrs.readonly

    with_scope(env, None, action)
    assert env.snapshot() == before
    with_scope(env, None, lambda e, b: None)
    assert env.snapshot() == before


# random programs: a stack model predicts which writes are legal

ops = st.lists(st.sampled_from(["open", "close", "writable", "const", "write"]), max_size=25)


def _program(seq: list[str]) -> tuple[str, int]:
    mut = [False]  # False: read-only
    depth = 0
    out = ["var a : Int :: const;"]
    bad = 0
    for op in seq:
        if op == "open":
            out.append("{")
            mut.append(mut[-1])
            depth += 1
        elif op == "close" and depth:
            out.append("};")
            mut.pop()
            depth -= 1
        elif op in ("writable", "const"):
            out.append(f"a : a :: {op};")
            mut[-1] = op == "writable"
        elif op == "write":
            out.append("a := 1;")
            bad += not mut[-1]
    out.extend(["};"] * depth)
    return "\n".join(out), bad


@given(ops)
def test_random_retype_programs(seq):
    text, bad = _program(seq)
    trace: list = []
    try:
        typecheck(parse(SourceProgram(text)), block_trace=trace)
        found = 0
    except TypeCheckFailed as exc:
        assert all("read-only" in d.message for d in exc.errors)
        found = len(exc.errors)
    assert found == bad
    for _block, before, after in trace:
        assert before == after
