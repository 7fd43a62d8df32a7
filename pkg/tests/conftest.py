import random

import pytest
from hypothesis import strategies as st

from pbac.identity import EntityId, Kind, PermType, Permission

entity_ids = st.builds(EntityId, st.sampled_from(list(Kind)), st.binary(min_size=16, max_size=16))
optional_int = st.none() | st.integers(min_value=0, max_value=2**62)
permissions = st.builds(
    Permission,
    entity_ids,
    entity_ids,
    st.sampled_from(list(PermType)),
    st.none() | st.text(max_size=8),
    optional_int,
    st.none() | st.integers(min_value=1, max_value=2**31),
)


def random_entity(rng: random.Random, kind: Kind = Kind.USER) -> EntityId:
    return EntityId(kind, rng.randbytes(16))


@pytest.fixture
def rng():
    return random.Random(1234)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; it is printed in the terminal summary and to stdout."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
