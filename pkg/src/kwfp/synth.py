"""Seeded synthetic search-session generator.

A *world* assigns every keyword a fixed template: a handful of connections,
each with a packet-size/direction/timing skeleton.  Individual visits are
drawn from the template with optional size jitter, extra third-party
connections, a per-"browser" size shift and a gap-dependent drift, which lets
the evaluation protocols be exercised against known ground truth.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import PreconditionError
from .trace import Connection, Dataset, SampleMeta, TraceSample

MIN_SIZE = 60
MAX_SIZE = 1460
SIZE_CEILING = 1500
_SUBDOMAINS = ("", "www.", "links.", "images.", "static.", "api.", "improving.", "external-content.")


@dataclass(frozen=True)
class EngineProfile:
    name: str
    primary_domains: tuple[str, ...]
    noise_domains: tuple[str, ...] = ()
    noise_conn_rate: float = 0.0  # mean extra connections per trace
    template_noise: float = 0.0  # size jitter std, bytes
    drift_rate: float = 0.0  # fraction of template packets resized per unit gap
    timing_noise: float = 0.0  # log-normal sigma on inter-arrival times
    psc_margin: float = 40.0
    conn_range: tuple[int, int] = (3, 8)
    packet_range: tuple[int, int] = (20, 200)

    def __post_init__(self):
        for name in ("noise_conn_rate", "template_noise", "drift_rate", "timing_noise", "psc_margin"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"EngineProfile.{name} must be ≥ 0")
        object.__setattr__(self, "primary_domains", tuple(self.primary_domains))
        object.__setattr__(self, "noise_domains", tuple(self.noise_domains))
        object.__setattr__(self, "conn_range", tuple(self.conn_range))
        object.__setattr__(self, "packet_range", tuple(self.packet_range))


PROFILES: dict[str, EngineProfile] = {
    # DuckDuckGo-like: one first-party domain, little jitter, no third parties.
    "stable": EngineProfile(
        name="stable",
        primary_domains=("duckduckgo.com",),
        template_noise=0.5,
        timing_noise=0.1,
    ),
    # Yahoo-like: many third-party domains, heavier jitter.
    "noisy": EngineProfile(
        name="noisy",
        primary_domains=("yahoo.com",),
        noise_domains=(
            "yimg.com", "atwola.com", "scorecardresearch.com", "adtechus.com", "google.com",
            "bing.com", "nexac.com", "addthis.com", "krxd.net", "yahoodns.net",
        ),
        noise_conn_rate=6.0,
        template_noise=3.0,
        timing_noise=0.3,
    ),
    # Regular (non-search) page visits on a large portal.
    "page": EngineProfile(
        name="page",
        primary_domains=("yahoo.com",),
        noise_domains=(
            "yimg.com", "atwola.com", "scorecardresearch.com", "adtechus.com", "doubleclick.net",
            "googlesyndication.com", "krxd.net", "yahoodns.net", "akamaihd.net", "media.net",
            "smartadserver.com", "adroll.com",
        ),
        noise_conn_rate=10.0,
        template_noise=3.0,
        timing_noise=0.3,
    ),
}


@dataclass(frozen=True, eq=False)
class TemplateConnection:
    server_name: str
    port: int
    start_us: int
    offsets_us: np.ndarray
    directions: np.ndarray
    sizes: np.ndarray


@dataclass(frozen=True, eq=False)
class KeywordTemplate:
    keyword: str
    connections: tuple[TemplateConnection, ...]
    drift_order: np.ndarray  # permutation over the flattened packet index
    drift_sizes: np.ndarray  # replacement size per flattened packet

    @property
    def packet_count(self) -> int:
        return sum(len(c.sizes) for c in self.connections)

    def sizes_at_gap(self, fraction: float) -> list[np.ndarray]:
        flat = np.concatenate([c.sizes for c in self.connections])
        k = int(round(min(1.0, max(0.0, fraction)) * len(flat)))
        if k:
            idx = self.drift_order[:k]
            flat = flat.copy()
            flat[idx] = self.drift_sizes[idx]
        bounds = np.cumsum([0] + [len(c.sizes) for c in self.connections])
        return [flat[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def psc(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for c in self.connections:
            for d, s in zip(c.directions.tolist(), c.sizes.tolist()):
                counts[(d, s)] = counts.get((d, s), 0) + 1
        return counts


@dataclass(frozen=True, eq=False)
class World:
    seed: int
    profile: EngineProfile
    templates: dict[str, KeywordTemplate]
    shared_skeleton: bool = False
    keystroke_us: int = 500_000

    @property
    def keywords(self) -> list[str]:
        return list(self.templates)

    def spec(self) -> dict:
        """Everything needed to rebuild this world with :func:`build_world`."""
        return {
            "seed": self.seed,
            "n_keywords": len(self.templates),
            "profile": asdict(self.profile),
            "shared_skeleton": self.shared_skeleton,
            "keystroke_us": self.keystroke_us,
        }

    def to_json(self) -> str:
        return json.dumps(self.spec(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "World":
        spec = json.loads(text)
        return build_world(
            spec["seed"], spec["n_keywords"], EngineProfile(**spec["profile"]),
            shared_skeleton=spec["shared_skeleton"], keystroke_us=spec["keystroke_us"],
        )


def keyword_name(i: int) -> str:
    return f"kw{i:04d}"


def _psc_l1(a: dict, b: dict) -> int:
    keys = a.keys() | b.keys()
    return sum(abs(a.get(k, 0) - b.get(k, 0)) for k in keys)


def _draw_sizes(rng: np.random.Generator, directions: np.ndarray) -> np.ndarray:
    n = len(directions)
    incoming = directions > 0
    sizes = rng.integers(MIN_SIZE, 801, size=n)
    full = rng.random(n) < 0.4
    sizes[incoming] = np.where(full[incoming], MAX_SIZE, rng.integers(MIN_SIZE, MAX_SIZE + 1, size=n)[incoming])
    return sizes


def _draw_skeleton(rng: np.random.Generator, profile: EngineProfile):
    n_conns = int(rng.integers(profile.conn_range[0], profile.conn_range[1] + 1))
    starts = np.sort(rng.integers(0, 3_000_000, size=n_conns))
    starts[0] = 0
    skel = []
    for j in range(n_conns):
        n_pk = int(rng.integers(profile.packet_range[0], profile.packet_range[1] + 1))
        dirs = np.where(rng.random(n_pk) < 0.6, 1, -1).astype(np.int8)
        dirs[0] = -1
        gaps = rng.exponential(5_000.0, size=n_pk).astype(np.int64)
        gaps[0] = 0
        host = _SUBDOMAINS[int(rng.integers(len(_SUBDOMAINS)))] + profile.primary_domains[j % len(profile.primary_domains)]
        skel.append((host, 443, int(starts[j]), np.cumsum(gaps), dirs))
    return skel


def _draw_template(rng: np.random.Generator, keyword: str, skeleton) -> KeywordTemplate:
    conns = tuple(
        TemplateConnection(host, port, start, offsets, dirs, _draw_sizes(rng, dirs))
        for host, port, start, offsets, dirs in skeleton
    )
    all_dirs = np.concatenate([c.directions for c in conns])
    return KeywordTemplate(
        keyword=keyword,
        connections=conns,
        drift_order=rng.permutation(len(all_dirs)),
        drift_sizes=_draw_sizes(rng, all_dirs),
    )


def build_world(
    seed: int,
    n_keywords: int,
    profile: EngineProfile | str = "stable",
    *,
    shared_skeleton: bool = False,
    keystroke_us: int = 500_000,
    max_retries: int = 50,
) -> World:
    """Create ``n_keywords`` mutually distinct keyword templates.

    Templates whose PSC vector lies within ``profile.psc_margin`` (L1) of an
    earlier template are redrawn; :class:`PreconditionError` is raised when
    that keeps failing.  With ``shared_skeleton`` every keyword has the same
    connections, packet counts, directions and timing, so classes differ
    only in packet sizes.
    """
    if isinstance(profile, str):
        profile = PROFILES[profile]
    if n_keywords < 2:
        raise PreconditionError("a world needs at least 2 keywords")
    rng = np.random.default_rng(seed)
    shared = _draw_skeleton(rng, profile) if shared_skeleton else None
    templates: dict[str, KeywordTemplate] = {}
    pscs: list[dict] = []
    for i in range(n_keywords):
        kw = keyword_name(i)
        for _ in range(max_retries):
            skel = shared if shared is not None else _draw_skeleton(rng, profile)
            tpl = _draw_template(rng, kw, skel)
            psc = tpl.psc()
            if all(_psc_l1(psc, other) >= profile.psc_margin for other in pscs):
                break
        else:
            raise PreconditionError(
                f"could not keep templates {profile.psc_margin} apart after {max_retries} tries; "
                "use fewer keywords or a smaller margin"
            )
        templates[kw] = tpl
        pscs.append(psc)
    return World(seed, profile, templates, shared_skeleton, keystroke_us)


def _stream(world: World, keyword: str, visit_index: int, gap: float, browser: str) -> np.random.Generator:
    kw_idx = world.keywords.index(keyword)
    entropy = [world.seed, kw_idx, visit_index, int(round(gap * 1000)), zlib.crc32(browser.encode())]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_trace(
    world: World,
    keyword: str,
    visit_index: int,
    gap: float = 0.0,
    rng: np.random.Generator | None = None,
    *,
    browser: str = "chrome",
    size_shift: int = 0,
    label: str | None = None,
) -> TraceSample:
    """Draw one visit of ``keyword``.

    Without an explicit ``rng`` the stream is derived from
    ``(world.seed, keyword, visit_index, gap, browser)`` so the same call
    always yields the same trace.
    """
    if keyword not in world.templates:
        raise PreconditionError(f"unknown keyword {keyword!r}")
    if rng is None:
        rng = _stream(world, keyword, visit_index, gap, browser)
    prof = world.profile
    tpl = world.templates[keyword]
    sizes_per_conn = tpl.sizes_at_gap(gap * prof.drift_rate)

    conns = []
    for tc, sizes in zip(tpl.connections, sizes_per_conn):
        sizes = sizes.astype(np.int64)
        if prof.template_noise > 0:
            sizes = sizes + np.rint(rng.normal(0.0, prof.template_noise, size=len(sizes))).astype(np.int64)
        sizes = np.clip(sizes + size_shift, MIN_SIZE, SIZE_CEILING)
        offsets = tc.offsets_us
        if prof.timing_noise > 0:
            gaps = np.diff(offsets, prepend=0) * np.exp(rng.normal(0.0, prof.timing_noise, size=len(offsets)))
            offsets = np.cumsum(gaps).astype(np.int64)
        ts = tc.start_us + offsets
        conns.append(Connection(
            ts, tc.directions, sizes,
            server_name=tc.server_name,
            server_port=tc.port,
            established_before_typing=tc.start_us < world.keystroke_us,
        ))

    n_noise = int(rng.poisson(prof.noise_conn_rate)) if prof.noise_conn_rate > 0 and prof.noise_domains else 0
    for _ in range(n_noise):
        n_pk = int(rng.integers(prof.packet_range[0], prof.packet_range[1] + 1))
        dirs = np.where(rng.random(n_pk) < 0.6, 1, -1).astype(np.int8)
        dirs[0] = -1
        start = int(rng.integers(0, 4_000_000))
        ts = start + np.cumsum(rng.exponential(5_000.0, size=n_pk).astype(np.int64))
        host = prof.noise_domains[int(rng.integers(len(prof.noise_domains)))]
        sizes = np.clip(rng.integers(MIN_SIZE, MAX_SIZE + 1, size=n_pk) + size_shift, MIN_SIZE, SIZE_CEILING)
        conns.append(Connection(
            ts, dirs, sizes,
            server_name=host,
            server_port=443,
            established_before_typing=start < world.keystroke_us,
        ))

    meta = SampleMeta(
        label=keyword if label is None else label,
        engine=prof.name,
        browser=browser,
        mode="homepage",
        capture_start_us=1_550_000_000_000_000 + visit_index * 3_600_000_000,
        first_keystroke_us=world.keystroke_us,
        visit_index=visit_index,
    )
    return TraceSample(meta, tuple(conns))


def generate_dataset(
    world: World,
    visits: int | Iterable[int],
    *,
    keywords: Sequence[str] | None = None,
    gap: float = 0.0,
    browser: str = "chrome",
    size_shift: int = 0,
    label: str | None = None,
) -> Dataset:
    """Sample every keyword at every visit index, keyword-major."""
    visit_ids = list(range(visits)) if isinstance(visits, int) else list(visits)
    kws = world.keywords if keywords is None else list(keywords)
    samples = tuple(
        sample_trace(world, kw, v, gap, browser=browser, size_shift=size_shift, label=label)
        for kw in kws
        for v in visit_ids
    )
    return Dataset(samples, provenance=f"synth:{world.profile.name}:seed={world.seed}")


def with_profile(profile: EngineProfile | str, **changes) -> EngineProfile:
    if isinstance(profile, str):
        profile = PROFILES[profile]
    return replace(profile, **changes)
