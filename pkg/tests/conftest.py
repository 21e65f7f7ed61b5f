import numpy as np
import pytest

from seqaudit.core import AuditRecord


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bernoulli_pair_stream(mu0: float, mu1: float, horizon: int, seed: int) -> list[AuditRecord]:
    """Interleaved two-group Bernoulli stream, one pair per step."""
    gen = np.random.default_rng(seed)
    out = []
    for t in range(1, horizon + 1):
        out.append(AuditRecord(t=t, group=0, y_hat=float(gen.random() < mu0)))
        out.append(AuditRecord(t=t, group=1, y_hat=float(gen.random() < mu1)))
    return out
