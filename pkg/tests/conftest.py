import pytest

from rmtm.sample import sample_db, sample_schema


@pytest.fixture
def fk_db():
    return sample_db(linked=False)


@pytest.fixture
def link_db():
    return sample_db(linked=True)


@pytest.fixture
def fk_schema():
    return sample_schema(linked=False)


@pytest.fixture
def link_schema():
    return sample_schema(linked=True)
