import pytest

from prefsearch.dialogue import PolicyConfig, load_templates
from prefsearch.kb import load_knowledge_base
from prefsearch.session import DATA_DIR, DEFAULT_CONFIG, DEFAULT_TEMPLATES


@pytest.fixture(scope="session")
def kb():
    return load_knowledge_base(DATA_DIR / "hotels-sample.json")


@pytest.fixture(scope="session")
def config():
    return PolicyConfig.from_file(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def templates():
    return load_templates(DEFAULT_TEMPLATES)


@pytest.fixture()
def kb_path():
    return DATA_DIR / "hotels-sample.json"


@pytest.fixture()
def script_path():
    return DATA_DIR / "table1-style.script"
