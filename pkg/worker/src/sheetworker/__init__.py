"""Sandbox-side executor: persistent Python session over an NDJSON protocol.

Launch with `python -m sheetworker` (or the `sheetworker` script); the
workbook path arrives in the protocol's open message. The session namespace
holds the loaded workbook behind native tool bindings (inspector, search,
get_sheet_as_dataframe, list_sheets, plus set_cell/save_workbook for edits)
next to preloaded pandas/numpy.
"""

__version__ = "0.1.0"
