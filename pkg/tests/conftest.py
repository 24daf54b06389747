import time
import numpy as np
import pytest
from hypothesis import strategies as st

from kwfp.trace import Connection, Dataset, SampleMeta, TraceSample

HOSTS = (None, "duckduckgo.com", "links.duckduckgo.com", "Static.Yahoo.COM.", "news.bbc.co.uk", "ad.doubleclick.net", "ünï.example")


def make_sample(conns, label="kw", visit_index=0, keystroke=None, **meta):
    """Build a sample from ``[(packets, kwargs), ...]`` with packets as (t, dir, size)."""
    built = [Connection.from_packets(p, **kw) for p, kw in conns]
    return TraceSample(SampleMeta(label, visit_index=visit_index, first_keystroke_us=keystroke, **meta), tuple(built))


def random_sample(rng: np.random.Generator, label=None, visit_index=0, max_conns=4, max_packets=30) -> TraceSample:
    conns = []
    for _ in range(int(rng.integers(1, max_conns + 1))):
        n = int(rng.integers(1, max_packets + 1))
        start = int(rng.integers(0, 2_000_000))
        ts = start + np.cumsum(rng.integers(0, 50_000, size=n))
        dirs = rng.choice([-1, 1], size=n)
        sizes = rng.integers(1, 1501, size=n)
        host = HOSTS[int(rng.integers(len(HOSTS)))]
        conns.append(Connection(
            ts, dirs, sizes,
            server_name=host.lower().rstrip(".") if host else None,
            server_port=int(rng.choice([443, 80, 8443])),
            established_before_typing=bool(rng.integers(2)),
        ))
    meta = SampleMeta(
        label=label if label is not None else f"kw{int(rng.integers(5))}",
        engine=str(rng.choice(["duckduckgo", "yahoo"])),
        browser=str(rng.choice(["chrome", "firefox"])),
        mode=str(rng.choice(["homepage", "addressbar"])),
        capture_start_us=int(rng.integers(0, 2**53)),
        first_keystroke_us=None if rng.integers(2) else int(rng.integers(0, 3_000_000)),
        visit_index=visit_index,
    )
    return TraceSample(meta, tuple(conns))


def random_dataset(rng, n_samples) -> Dataset:
    return Dataset(tuple(random_sample(rng, visit_index=i) for i in range(n_samples)))


@st.composite
def samples(draw, max_conns=3, max_packets=12):
    """Hypothesis strategy for valid trace samples."""
    n_conns = draw(st.integers(1, max_conns))
    conns = []
    for _ in range(n_conns):
        n = draw(st.integers(1, max_packets))
        gaps = draw(st.lists(st.integers(0, 10_000), min_size=n, max_size=n))
        start = draw(st.integers(0, 1_000_000))
        dirs = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
        sizes = draw(st.lists(st.integers(1, 1500), min_size=n, max_size=n))
        host = draw(st.sampled_from([None, "a.example.com", "b.example.org", "example.co.uk"]))
        conns.append(Connection(start + np.cumsum(gaps), dirs, sizes, server_name=host,
                                server_port=draw(st.sampled_from([443, 80, 8080])),
                                established_before_typing=draw(st.booleans())))
    keystroke = draw(st.one_of(st.none(), st.integers(0, 1_200_000)))
    meta = SampleMeta(draw(st.sampled_from(["a", "b", "-1"])), "e", "b", "homepage", 0, keystroke,
                      draw(st.integers(0, 100)))
    return TraceSample(meta, tuple(conns))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance reporting

SESSION_START = [time.perf_counter()]
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(number: int, ok: bool, detail: str) -> None:
    """Log one acceptance criterion outcome; the summary prints them in order."""
    ACCEPTANCE.append((number, bool(ok), detail))


def pytest_sessionstart(session):
    SESSION_START[0] = time.perf_counter()


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.get_closest_marker("runs_last") is not None)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
