import numpy as np
import pytest

from livemix import session


def numerical_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function at ndarray x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def two_channel_spec(duration_seconds=4.0, gains=(1.0, 0.5)):
    return {
        "sample_rate": 16000,
        "duration_seconds": duration_seconds,
        "normalize_reference_dbfs": -6.0,
        "channels": [
            {"name": "a", "instrument": "bass", "kind": "sine", "freq": 220.0,
             "level": 0.5, "am_hz": 0.7, "am_depth": 0.3, "target_gain": gains[0]},
            {"name": "b", "instrument": "lead", "kind": "saw", "freq": 523.25,
             "level": 0.5, "am_hz": 1.1, "am_depth": 0.3, "target_gain": gains[1]},
        ],
    }


@pytest.fixture
def synth_session():
    return session.gen_synth(session.DEFAULT_SYNTH_SPEC, seed=11)


@pytest.fixture
def small_session():
    spec = dict(session.DEFAULT_SYNTH_SPEC, duration_seconds=2.0)
    return session.gen_synth(spec, seed=5)
