from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import (  # noqa: E402
    biblio_mapping,
    drug_instance,
    drug_source_schema,
    drug_target_schema,
    drug_trials_mapping,
)


@pytest.fixture
def source_schema():
    return drug_source_schema()


@pytest.fixture
def target_schema():
    return drug_target_schema()


@pytest.fixture
def drug_mapping():
    return drug_trials_mapping()


@pytest.fixture
def micro_instance():
    return drug_instance()


@pytest.fixture
def gold_biblio():
    return biblio_mapping()
