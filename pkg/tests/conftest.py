import functools

import numpy as np
import pytest

from stscflow.events import EventStream, SyntheticSceneSpec, generate_synthetic

LINEAR = dict(p1=(2.0, 0.0), p2=(4.0, 0.0))
CURVED = dict(p1=(4.0, 0.0), p2=(4.0, 4.0))


@functools.lru_cache(maxsize=None)
def scene(pattern="random-texture", motion="linear", size=64, seed=0):
    kw = LINEAR if motion == "linear" else CURVED
    return generate_synthetic(SyntheticSceneSpec(pattern=pattern, width=size, height=size, seed=seed, **kw))


def random_stream(n, width=16, height=12, seed=0, t_start=0.0, t_end=0.1, margin=0.0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(t_start, t_end, n))
    x = rng.uniform(margin, width - 1 - margin, n)
    y = rng.uniform(margin, height - 1 - margin, n)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return EventStream(x, y, t, p, width, height, t_start, t_end)


def as_events(stream):
    return [(float(x), float(y), float(t), int(p)) for x, y, t, p in zip(stream.x, stream.y, stream.t, stream.p)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
