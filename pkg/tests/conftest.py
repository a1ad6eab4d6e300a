import numpy as np
import pytest

from absamamba.config import ModelConfig
from absamamba.data import SynthConfig, synth_longrange_generate

# reduced widths keep model-level tests fast
TINY = dict(word_dim=8, pos_dim=4, tag_dim=4, hidden=4, heads=2, ssm_state=4, kan_grid=3,
            dropout_embed=0.1, epochs=2, lr=0.01, batch_size=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(**TINY)


@pytest.fixture(scope="session")
def synth_small():
    return synth_longrange_generate(SynthConfig(n=24, min_len=6, max_len=10, d_min=2, d_max=4, seed=3))


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a pass/fail line and fails the test if not ok."""

    def report(n: int, ok: bool, detail: str = ""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
