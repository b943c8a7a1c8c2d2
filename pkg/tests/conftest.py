import math
import os

# small moduli keep key generation fast; must be set before audita.config is imported
os.environ.setdefault("PDP_ALLOWED_MODULUS_BITS", "[512,1024,2048,3072]")

import pytest  # noqa: E402

from audita.core.crypto import HashDrbg  # noqa: E402
from audita.core.logging import setup_logging  # noqa: E402
from audita.services.pdp_service import pdp_keygen  # noqa: E402
from audita.services.protocol_service import bc_keygen, setup, sn_keygen  # noqa: E402

TEST_MODULUS_BITS = 512
TEST_CHUNK_SIZE = 32
TEST_CHUNKS = 16

setup_logging("WARNING")


def chi_square_critical(dof: int, z: float = 3.090) -> float:
    """Wilson-Hilferty upper quantile of chi-square; z=3.090 is the 0.001 tail"""
    c = 2.0 / (9.0 * dof)
    return dof * (1.0 - c + z * math.sqrt(c)) ** 3


def chi_square(counts, expected: float) -> float:
    return sum((observed - expected) ** 2 / expected for observed in counts)


@pytest.fixture(scope="session")
def pdp_keys():
    return pdp_keygen(TEST_MODULUS_BITS, b"pdp-test-key", chunk_size=TEST_CHUNK_SIZE)


@pytest.fixture(scope="session")
def encoded_file():
    data = HashDrbg(b"encoded-file-data").randbytes(TEST_CHUNKS * TEST_CHUNK_SIZE - 5)
    return setup(data, TEST_CHUNK_SIZE, TEST_MODULUS_BITS, b"encoded-file-seed")


@pytest.fixture(scope="session")
def storage_keys():
    return [sn_keygen(f"node-{i}".encode()) for i in range(6)]


@pytest.fixture(scope="session")
def creator_keys():
    return [bc_keygen(f"creator-{i}".encode()) for i in range(4)]


@pytest.fixture
def uniform_chi_square():
    """Return (statistic, critical value) for counts that should be uniform"""

    def check(counts):
        counts = list(counts)
        expected = sum(counts) / len(counts)
        return chi_square(counts, expected), chi_square_critical(len(counts) - 1)

    return check
