import pytest

from formation_sim import warmup_kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the jitted kernels once so timing-sensitive tests are stable."""
    warmup_kernels()
