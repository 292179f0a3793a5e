import pathlib

import pytest

from sheetagent.demo import (
    landings_workbook,
    payments_workbook,
    quarterly_workbook,
    support_chats_workbook,
)
from sheetagent.workbook import load_workbook, save_workbook

GOLDENS_DIR = pathlib.Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """All demo workbooks written once per test session."""
    root = tmp_path_factory.mktemp("workbooks")
    save_workbook(quarterly_workbook(), root / "quarterly.xlsx")
    save_workbook(landings_workbook(), root / "landings.xlsx")
    save_workbook(support_chats_workbook(), root / "support_chats.xlsx")
    save_workbook(payments_workbook(), root / "payments.xlsx")
    return root


@pytest.fixture(scope="session")
def quarterly_path(fixture_dir):
    return fixture_dir / "quarterly.xlsx"


@pytest.fixture(scope="session")
def landings_path(fixture_dir):
    return fixture_dir / "landings.xlsx"


@pytest.fixture(scope="session")
def chats_path(fixture_dir):
    return fixture_dir / "support_chats.xlsx"


@pytest.fixture(scope="session")
def payments_path(fixture_dir):
    return fixture_dir / "payments.xlsx"


@pytest.fixture(scope="session")
def quarterly_wb(quarterly_path):
    return load_workbook(quarterly_path)


@pytest.fixture(scope="session")
def landings_wb(landings_path):
    return load_workbook(landings_path)


@pytest.fixture(scope="session")
def chats_wb(chats_path):
    return load_workbook(chats_path)


@pytest.fixture(scope="session")
def payments_wb(payments_path):
    return load_workbook(payments_path)


def golden(name: str) -> str:
    return (GOLDENS_DIR / name).read_text("utf-8").rstrip("\n")
