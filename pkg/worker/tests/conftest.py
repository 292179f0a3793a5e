import sys

import pytest

from sheetagent.demo import (
    landings_workbook,
    payments_workbook,
    quarterly_workbook,
    support_chats_workbook,
)
from sheetagent.sandbox import ProcessExecutor, close_session, open_session
from sheetagent.workbook import save_workbook

WORKER_CMD = [sys.executable, "-m", "sheetworker"]


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("workbooks")
    save_workbook(quarterly_workbook(), root / "quarterly.xlsx")
    save_workbook(landings_workbook(), root / "landings.xlsx")
    save_workbook(support_chats_workbook(), root / "support_chats.xlsx")
    save_workbook(payments_workbook(), root / "payments.xlsx")
    return root


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
def quarterly_path(fixture_dir):
    return fixture_dir / "quarterly.xlsx"


@pytest.fixture
def executor():
    return ProcessExecutor(WORKER_CMD)


@pytest.fixture
def session_factory(executor):
    """Opens real worker sessions and closes them at teardown."""
    opened = []

    def factory(workbook_path):
        session = open_session(executor, workbook_path)
        opened.append(session)
        return session

    yield factory
    for session in opened:
        try:
            close_session(session)
        except Exception:
            pass
