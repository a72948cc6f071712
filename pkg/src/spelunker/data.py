"""Paths to the bundled fixture data."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    return Path(resources.files("spelunker").joinpath("data", name))


def fixture_csv() -> Path:
    return data_path("wine_fixture.csv")


def fixture_schema() -> Path:
    return data_path("wine_schema.json")


def mock_script() -> Path:
    return data_path("mock_llm_script.json")


def truth_cases_path() -> Path:
    return data_path("truth_cases.json")
