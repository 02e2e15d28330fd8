import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lgcm import data  # noqa: E402
from lgcm.config import LGCMConfig  # noqa: E402
from lgcm.model import LGCM  # noqa: E402


def numeric_grad(f, x: np.ndarray, step: float = 1e-5, indices=None) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. the array ``x`` (mutated in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + step
        hi = f()
        flat[i] = old - step
        lo = f()
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def rel_err(a, b, floor: float = 1e-5) -> float:
    """Norm-wise relative error; gradients smaller than ``floor`` are compared absolutely.

    The floor keeps identically-zero gradients (e.g. attention key biases) from
    turning finite-difference round-off into a relative error of 1.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def tiny_config(**kw) -> LGCMConfig:
    base = dict(vocab_size=12, d=8, heads=2, n_local=1, n_global=1, n_dec=1, n_max=4, max_utt_len=8, seed=3)
    base.update(kw)
    return LGCMConfig(**base)


def params_of(model: LGCM) -> dict:
    return {name: p.data for name, p in model.named_parameters()}


def randomize(model: LGCM, seed: int = 0, std: float = 0.5) -> LGCM:
    """Move every parameter (LayerNorm affine and biases included) off its init."""
    rng = np.random.default_rng(seed)
    for _, p in model.named_parameters():
        p.data = p.data + rng.normal(0.0, std, p.shape)
    return model


EX_TWO = data.TrainingExample(((1, 5, 6, 2), (1, 7, 2)), (0, 1), (1, 8, 9, 10, 2), 0)
EX_ONE = data.TrainingExample(((1, 4, 5, 6, 2),), (1,), (1, 9, 2), 0)
EX_THREE = data.TrainingExample(((1, 4, 2), (1, 7, 8, 2), (1, 11, 2)), (1, 0, 1), (1, 6, 6, 2), 0)


@pytest.fixture
def examples():
    return [EX_TWO, EX_ONE, EX_THREE]


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        '{"dialog": [{"speaker": "A", "text": "Hello, world!"}, {"speaker": "B", "text": "Hi there."}]}\n'
        '{"dialog": [{"speaker": "B", "text": "How are you?"}, {"speaker": "A", "text": "Fine, thanks."},'
        ' {"speaker": "B", "text": "Good to hear!"}]}\n'
        '{"dialog": [{"speaker": "A", "text": "I can\'t  go (sorry)."}, {"speaker": "B", "text": "OK; see you."}]}\n',
        encoding="utf-8",
    )
    return path


# acceptance reporting: one PASS/FAIL line per criterion ----------------------

_CRITERIA: dict[str, tuple[int, str]] = {}
_RESULTS: dict[int, list[bool]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _CRITERIA[item.nodeid] = (mark.args[0], mark.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    number = _CRITERIA[report.nodeid][0]
    if report.when == "call" or report.failed:
        _RESULTS.setdefault(number, []).append(report.passed and not report.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    titles = {n: t for n, t in _CRITERIA.values()}
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        outcomes = _RESULTS[number]
        verdict = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d}: {verdict}  {titles[number]} ({sum(outcomes)}/{len(outcomes)} checks)")
