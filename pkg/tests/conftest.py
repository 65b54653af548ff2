"""
Pytest configuration and fixtures
"""
import asyncio
from pathlib import Path

import pytest
from httpx import ASGITransport, AsyncClient

from tests.factories import write_city


@pytest.fixture(scope="session")
def event_loop():
    """Create an instance of the default event loop for the test session."""
    loop = asyncio.get_event_loop_policy().new_event_loop()
    yield loop
    loop.close()


@pytest.fixture
async def client():
    """Create test client"""
    from tripchain.main import app

    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        yield ac


@pytest.fixture
def city_file(tmp_path) -> Path:
    return write_city(tmp_path / "city.geojson")
