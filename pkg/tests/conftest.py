"""Shared fixtures and suite ordering.

The acceptance tests are moved to the end of the collection so their
wall-clock budget covers the whole suite, and the expensive shared state
(default task, pretrained encoders) is built once per session.
"""

import time

import pytest

from pest.harness import DESK_ADAPT_DEFAULTS, make_adapt_config
from pest.pretrain import PretrainConfig, pretrain_vlm
from pest.synthbench import TaskSpec, generate_task

# Import time of this module is as close to session start as we can observe.
_SESSION_T0 = time.monotonic()


def pytest_collection_modifyitems(items):
    # Stable sort: acceptance checks last, everything else in file order.
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture(scope="session")
def session_start() -> float:
    return _SESSION_T0


@pytest.fixture(scope="session")
def default_task():
    """The stock synthetic task every reference number is pinned against."""
    return generate_task(TaskSpec())


@pytest.fixture(scope="session")
def pretrained(default_task):
    """(image_encoder, text_encoder, pretrain_rows) for the stock task."""
    return pretrain_vlm(default_task, PretrainConfig(), seed=42)


@pytest.fixture(scope="session")
def desk_adapt():
    """Factory for adaptation configs at the harness desk-scale settings."""

    def make(mode, **overrides):
        return make_adapt_config(dict(DESK_ADAPT_DEFAULTS), mode=mode, **overrides)

    return make
