import pytest

import mpsm


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile every JIT kernel once so timing-sensitive tests are stable
    mpsm.warmup()
