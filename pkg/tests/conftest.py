import pytest

from dptrips.domain import Attribute, DomainSchema


@pytest.fixture
def value_schema() -> DomainSchema:
    """Single categorical column, the workhorse micro-domain schema."""
    return DomainSchema((Attribute("value", "categorical"),))


def pts(*labels: str):
    """Shorthand: pts('a','a','b') -> [('a',), ('a',), ('b',)]."""
    return [(ch,) for ch in labels]
