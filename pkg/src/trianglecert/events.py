"""Synthetic time-tagged event streams and coincidence filtering.

Forward model: each source fires as a Poisson process; a firing draws an
outcome pair from the appropriate conditional of the target distribution and
deposits one detection per receiving station (with timing jitter, TDC
quantization, efficiency thinning).  Dark/accidental counts are independent
Poisson events per channel.  Reduction mirrors the hardware convention:
two-fold coincidences pair events of one source inside a small window w1
(greedy, earliest first, each event used once); a six-fold event is one
two-fold per source inside a larger window w2, keeping the first detected
per source and discarding the rest.

Timestamps are integer picoseconds on an 81 ps TDC grid.  Stations are coded
A=0, B=1, C=2 and sources AB=0, AC=1, BC=2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dist import EMPIRICAL_ATOL, OutcomeDistribution, triangle_variables
from .errors import DomainError

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not args else args[0]

TDC_RESOLUTION_PS = 81
STATION_A, STATION_B, STATION_C = 0, 1, 2
SOURCE_AB, SOURCE_AC, SOURCE_BC = 0, 1, 2
STATION_NAMES = ("A", "B", "C")
SOURCE_NAMES = ("AB", "AC", "BC")


@dataclass(frozen=True)
class PipelineConfig:
    """Rates in Hz, windows/jitter in picoseconds, duration in seconds.

    Defaults are tuned to land near a 38.7 Hz six-fold rate, so a 10-hour
    run accumulates ~1.4e6 events."""

    w1_ps: int = 4_100              # two-fold window (~4.1 ns)
    w2_ps: int = 20_000_000         # six-fold window (~20 us)
    rate_ab: float = 440.0          # generated pair rate of the entangled source
    rate_ac: float = 100_000.0      # generated rate of the classical signals
    rate_bc: float = 100_000.0
    dark_rate: float = 400.0        # accidental rate per detector channel
    efficiency: float = 0.5
    duration_s: float = 1.0
    jitter_ps: float = 500.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise DomainError("efficiency must lie in (0, 1]")
        if self.w1_ps >= self.w2_ps:
            raise DomainError("two-fold window must be smaller than the six-fold window")
        if min(self.rate_ab, self.rate_ac, self.rate_bc) < 0 or self.dark_rate < 0:
            raise DomainError("rates must be nonnegative")
        if self.duration_s <= 0:
            raise DomainError("duration must be positive")


@dataclass(frozen=True)
class EventStream:
    """Time-sorted events of one station."""

    station: int
    times_ps: np.ndarray   # int64
    sources: np.ndarray    # uint8, source tag
    channels: np.ndarray   # uint8, local outcome bit

    def __len__(self):
        return self.times_ps.size


@dataclass(frozen=True)
class TwofoldSet:
    """Per-source matched pairs; ``bits`` holds (first-station bit,
    second-station bit) with stations ordered alphabetically."""

    source: int
    times_ps: np.ndarray       # earliest of the two timestamps
    bits: np.ndarray           # (n, 2) uint8


@dataclass(frozen=True)
class SixfoldSet:
    times_ps: np.ndarray       # anchor time per six-fold
    outcomes: np.ndarray       # (n, 3) uint8: quaternary (a, b, c)

    def __len__(self):
        return self.times_ps.size


def _quantize(t: np.ndarray) -> np.ndarray:
    return (np.rint(t / TDC_RESOLUTION_PS)).astype(np.int64) * TDC_RESOLUTION_PS


def _poisson_times(rate: float, duration_s: float, rng) -> np.ndarray:
    n = rng.poisson(rate * duration_s)
    return np.sort(rng.random(n)) * duration_s * 1e12


def _sample_joint2(table: np.ndarray, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw n iid pairs from a 2x2 joint table."""
    flat = table.reshape(-1) / table.sum()
    draws = rng.choice(4, size=n, p=flat)
    return (draws >> 1).astype(np.uint8), (draws & 1).astype(np.uint8)


def synthesize(p: OutcomeDistribution, cfg: PipelineConfig) -> dict[int, EventStream]:
    """Per-station event streams for the target distribution.

    The classical sources carry the (a0, c0) and (b0, c1) marginals.  Every
    entangled pair draws (a1, b1) from the conditional of p given a setting
    pair: the coincidence grouping depends only on timestamps, so it is run
    once here, and each pair that ends up inside a six-fold is conditioned
    on the settings that grouping associates with it (the switch state its
    photons were measured under); stray pairs fall back to the most recent
    latched signals.  Re-filtering the streams with the generation windows
    therefore reproduces p exactly up to counting noise; darks, efficiency
    losses, cross-pairings and window changes degrade it the way real
    accidentals do.
    """
    if p.cards != (4, 4, 4):
        raise DomainError("pipeline targets must be three quaternary variables")
    rng = np.random.default_rng(cfg.seed)
    t = p.table().reshape(2, 2, 2, 2, 2, 2)  # (a0,a1,b0,b1,c0,c1)

    # source firing times
    t_ac = _poisson_times(cfg.rate_ac, cfg.duration_s, rng)
    t_bc = _poisson_times(cfg.rate_bc, cfg.duration_s, rng)
    t_ab = _poisson_times(cfg.rate_ab, cfg.duration_s, rng)

    # classical signal outcomes: (a0, c0) and (b0, c1) joint marginals
    a0_sig, c0_sig = _sample_joint2(t.sum(axis=(1, 2, 3, 5)), t_ac.size, rng)
    b0_sig, c1_sig = _sample_joint2(t.sum(axis=(0, 1, 3, 4)), t_bc.size, rng)

    def detections(times, payload, source):
        """Jitter, quantize, thin by efficiency; payloads ride along."""
        keep = rng.random(times.size) < cfg.efficiency
        tt = times[keep] + rng.normal(0.0, cfg.jitter_ps, size=int(keep.sum()))
        return _quantize(tt), np.full(tt.size, source, np.uint8), payload[keep]

    def darks(source):
        td = _quantize(_poisson_times(2 * cfg.dark_rate, cfg.duration_s, rng))
        bits = rng.integers(0, 2, size=td.size).astype(np.int64)
        return td, np.full(td.size, source, np.uint8), bits

    # payload convention: classical/dark events carry their bit (0/1);
    # entangled detections carry pair_id + 2 so bits can be filled later,
    # and dark AB events carry -(bit + 1).
    pair_ids = np.arange(t_ab.size, dtype=np.int64) + 2

    def station_parts(parts):
        times = np.concatenate([q[0] for q in parts])
        sources = np.concatenate([q[1] for q in parts])
        payload = np.concatenate([q[2].astype(np.int64) for q in parts])
        order = np.lexsort((payload, sources, times))
        return times[order], sources[order], payload[order]

    dark_ab_a = darks(SOURCE_AB)
    dark_ab_b = darks(SOURCE_AB)
    dark_ab_a = (dark_ab_a[0], dark_ab_a[1], -(dark_ab_a[2] + 1))
    dark_ab_b = (dark_ab_b[0], dark_ab_b[1], -(dark_ab_b[2] + 1))
    raw = {
        STATION_A: station_parts([
            detections(t_ac, a0_sig.astype(np.int64), SOURCE_AC),
            detections(t_ab, pair_ids, SOURCE_AB),
            darks(SOURCE_AC), dark_ab_a,
        ]),
        STATION_B: station_parts([
            detections(t_bc, b0_sig.astype(np.int64), SOURCE_BC),
            detections(t_ab, pair_ids, SOURCE_AB),
            darks(SOURCE_BC), dark_ab_b,
        ]),
        STATION_C: station_parts([
            detections(t_ac, c0_sig.astype(np.int64), SOURCE_AC),
            detections(t_bc, c1_sig.astype(np.int64), SOURCE_BC),
            darks(SOURCE_AC), darks(SOURCE_BC),
        ]),
    }

    # run the grouping once on timestamps to find the settings each
    # entangled pair is measured with
    grouped = _group_payloads(raw, cfg.w1_ps, cfg.w2_ps)
    cond_a0 = np.full(t_ab.size, -1, dtype=np.int64)
    cond_b0 = np.full(t_ab.size, -1, dtype=np.int64)
    for pa, pb, a0g, b0g in grouped:
        if pa >= 2 and pa == pb:  # a surviving true pair inside a six-fold
            cond_a0[pa - 2] = a0g
            cond_b0[pb - 2] = b0g

    # stray pairs: settings latched from the most recent signal
    stray = cond_a0 < 0
    ia = np.searchsorted(t_ac, t_ab[stray], side="right") - 1
    ib = np.searchsorted(t_bc, t_ab[stray], side="right") - 1
    cond_a0[stray] = np.where(ia >= 0, a0_sig[np.maximum(ia, 0)],
                              rng.integers(0, 2, size=int(stray.sum())))
    cond_b0[stray] = np.where(ib >= 0, b0_sig[np.maximum(ib, 0)],
                              rng.integers(0, 2, size=int(stray.sum())))

    # draw (a1, b1) per pair from p(a1, b1 | a0, b0)
    cond = t.sum(axis=(4, 5)).transpose(0, 2, 1, 3)  # (a0, b0, a1, b1)
    sums = cond.sum(axis=(2, 3), keepdims=True)
    cond = np.divide(cond, sums, out=np.full_like(cond, 0.25), where=sums > 0)
    a1_out = np.empty(t_ab.size, dtype=np.int64)
    b1_out = np.empty(t_ab.size, dtype=np.int64)
    for x in range(2):
        for y in range(2):
            mask = (cond_a0 == x) & (cond_b0 == y)
            n = int(mask.sum())
            if n:
                hi, lo = _sample_joint2(cond[x, y], n, rng)
                a1_out[mask] = hi
                b1_out[mask] = lo

    streams = {}
    fill = {STATION_A: a1_out, STATION_B: b1_out}
    for station, (times, sources, payload) in raw.items():
        channels = payload.copy()
        if station in fill:
            is_pair = payload >= 2
            channels[is_pair] = fill[station][payload[is_pair] - 2]
            is_dark_ab = payload < 0
            channels[is_dark_ab] = -payload[is_dark_ab] - 1
        channels = channels.astype(np.uint8)
        order = np.lexsort((channels, sources, times))
        streams[station] = EventStream(station, times[order], sources[order],
                                       channels[order])
    return streams


def _match_source(raw, s1, s2, source, w1_ps):
    t1, src1, pay1 = raw[s1]
    t2, src2, pay2 = raw[s2]
    m1, m2 = src1 == source, src2 == source
    tt1, pp1 = t1[m1], pay1[m1]
    tt2, pp2 = t2[m2], pay2[m2]
    i1, i2 = _greedy_match(tt1, tt2, np.int64(w1_ps))
    times = np.minimum(tt1[i1], tt2[i2])
    order = np.argsort(times, kind="stable")
    return times[order], pp1[i1][order], pp2[i2][order]


def _group_payloads(raw, w1_ps, w2_ps):
    """Grouping on timestamps only: yields (payA, payB, a0, b0) per six-fold
    where payA/payB are the AB two-fold payloads and a0/b0 the grouped
    classical bits (payloads of the AC and BC two-folds)."""
    tw = {
        SOURCE_AB: _match_source(raw, STATION_A, STATION_B, SOURCE_AB, w1_ps),
        SOURCE_AC: _match_source(raw, STATION_A, STATION_C, SOURCE_AC, w1_ps),
        SOURCE_BC: _match_source(raw, STATION_B, STATION_C, SOURCE_BC, w1_ps),
    }
    times = np.concatenate([tw[s][0] for s in range(3)])
    tags = np.concatenate([np.full(tw[s][0].size, s, np.uint8) for s in range(3)])
    payA = np.concatenate([tw[s][1] for s in range(3)])
    payB = np.concatenate([tw[s][2] for s in range(3)])
    order = np.lexsort((payB, payA, tags, times))
    times, tags = times[order], tags[order]
    payA, payB = payA[order], payB[order]
    t6, picks = _sixfold_scan_pick(times, tags, np.int64(w2_ps))
    jab, jac, jbc = picks[:, 0], picks[:, 1], picks[:, 2]
    return zip(payA[jab], payB[jab], payA[jac], payA[jbc])


@njit(cache=True)
def _greedy_match(t1, t2, w1):  # pragma: no cover - compiled
    n1, n2 = t1.size, t2.size
    out1 = np.empty(min(n1, n2), np.int64)
    out2 = np.empty(min(n1, n2), np.int64)
    i = j = k = 0
    while i < n1 and j < n2:
        dt = t1[i] - t2[j]
        if dt > w1:
            j += 1
        elif dt < -w1:
            i += 1
        else:
            out1[k] = i
            out2[k] = j
            k += 1
            i += 1
            j += 1
    return out1[:k], out2[:k]


def twofold_coincidences(streams: dict[int, EventStream], w1_ps: int) -> dict[int, TwofoldSet]:
    """Greedy earliest-first pairing of the two stations of each source."""
    pairs = {
        SOURCE_AB: (STATION_A, STATION_B),
        SOURCE_AC: (STATION_A, STATION_C),
        SOURCE_BC: (STATION_B, STATION_C),
    }
    out = {}
    for source, (s1, s2) in pairs.items():
        e1, e2 = streams[s1], streams[s2]
        if np.any(np.diff(e1.times_ps) < 0) or np.any(np.diff(e2.times_ps) < 0):
            raise DomainError("event streams must be time-sorted")
        m1 = e1.sources == source
        m2 = e2.sources == source
        t1, b1 = e1.times_ps[m1], e1.channels[m1]
        t2, b2 = e2.times_ps[m2], e2.channels[m2]
        i1, i2 = _greedy_match(t1, t2, np.int64(w1_ps))
        times = np.minimum(t1[i1], t2[i2])
        bits = np.stack([b1[i1], b2[i2]], axis=1)
        order = np.argsort(times, kind="stable")
        out[source] = TwofoldSet(source, times[order], bits[order])
    return out


@njit(cache=True)
def _sixfold_scan_pick(times, tags, w2):  # pragma: no cover - compiled
    """Indices (jab, jac, jbc) of the first two-fold per source inside each
    qualifying window; windows anchored at the first unconsumed two-fold and
    consumed wholesale on success."""
    n = times.size
    out_t = np.empty(n, np.int64)
    out_picks = np.empty((n, 3), np.int64)
    found = 0
    i = 0
    while i < n:
        t0 = times[i]
        limit = t0 + w2
        have = np.full(3, -1, np.int64)
        j = i
        while j < n and times[j] <= limit:
            tag = tags[j]
            if have[tag] < 0:
                have[tag] = j
            j += 1
        if have[0] >= 0 and have[1] >= 0 and have[2] >= 0:
            out_t[found] = t0
            out_picks[found, 0] = have[0]
            out_picks[found, 1] = have[1]
            out_picks[found, 2] = have[2]
            found += 1
            i = j  # consume the whole window, extras discarded
        else:
            i += 1  # anchor cannot seed a six-fold
    return out_t[:found], out_picks[:found]


def _merge_twofolds(twofolds: dict[int, TwofoldSet]):
    times = np.concatenate([twofolds[s].times_ps for s in range(3)])
    tags = np.concatenate([
        np.full(len(twofolds[s].times_ps), s, np.uint8) for s in range(3)
    ])
    bits = np.concatenate([twofolds[s].bits for s in range(3)])
    # deterministic merge: time, then source tag, then bits
    order = np.lexsort((bits[:, 1], bits[:, 0], tags, times))
    return times[order], tags[order], bits[order]


def sixfold_coincidences(twofolds: dict[int, TwofoldSet], w2_ps: int) -> SixfoldSet:
    """Windows of length w2 holding one two-fold per source; the first
    detected per source wins, everything else inside the window is
    discarded."""
    times, tags, bits = _merge_twofolds(twofolds)
    t6, picks = _sixfold_scan_pick(times, tags, np.int64(w2_ps))
    jab, jac, jbc = picks[:, 0], picks[:, 1], picks[:, 2]
    outcomes = np.empty((t6.size, 3), np.uint8)
    outcomes[:, 0] = 2 * bits[jac, 0] + bits[jab, 0]   # a = 2 a0 + a1
    outcomes[:, 1] = 2 * bits[jbc, 0] + bits[jab, 1]   # b = 2 b0 + b1
    outcomes[:, 2] = 2 * bits[jac, 1] + bits[jbc, 1]   # c = 2 c0 + c1
    return SixfoldSet(t6, outcomes)


def counts_to_distribution(sixfolds: SixfoldSet) -> tuple[np.ndarray, OutcomeDistribution]:
    if len(sixfolds) == 0:
        raise DomainError("no six-fold events to tally")
    o = sixfolds.outcomes.astype(np.int64)
    flat = (o[:, 0] * 4 + o[:, 1]) * 4 + o[:, 2]
    counts = np.bincount(flat, minlength=64)
    dist = OutcomeDistribution(triangle_variables(4), counts / counts.sum(),
                               atol=EMPIRICAL_ATOL)
    return counts, dist


def bulk_config(duration_s: float = 80.0, seed: int = 0, **overrides) -> PipelineConfig:
    """Time-compressed profile: same windows and noise texture as the
    defaults but rate-scaled so >= 1e6 six-folds fit in tens of simulated
    seconds (useful for error-bar studies that need 1.4e6-event statistics)."""
    params = dict(rate_ab=60_000.0, rate_ac=60_000.0, rate_bc=60_000.0,
                  dark_rate=2_000.0, efficiency=0.9, duration_s=duration_s,
                  seed=seed)
    params.update(overrides)
    return PipelineConfig(**params)


def run_pipeline(p: OutcomeDistribution, cfg: PipelineConfig):
    """synthesize -> twofold -> sixfold -> counts."""
    streams = synthesize(p, cfg)
    twofolds = twofold_coincidences(streams, cfg.w1_ps)
    sixfolds = sixfold_coincidences(twofolds, cfg.w2_ps)
    counts, dist = counts_to_distribution(sixfolds)
    return streams, twofolds, sixfolds, counts, dist


# -- serialization -------------------------------------------------------------

def save_events_csv(streams: dict[int, EventStream], path, comment: str = ""):
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("timestamp_ps,station,channel,source\n")
        merged = []
        for s, stream in streams.items():
            merged.append((stream.times_ps, np.full(len(stream), s, np.uint8),
                           stream.channels, stream.sources))
        times = np.concatenate([m[0] for m in merged])
        stations = np.concatenate([m[1] for m in merged])
        channels = np.concatenate([m[2] for m in merged])
        sources = np.concatenate([m[3] for m in merged])
        order = np.lexsort((channels, sources, stations, times))
        for i in order:
            fh.write(f"{times[i]},{STATION_NAMES[stations[i]]},"
                     f"{channels[i]},{SOURCE_NAMES[sources[i]]}\n")


def load_events_csv(path) -> dict[int, EventStream]:
    station_code = {n: i for i, n in enumerate(STATION_NAMES)}
    source_code = {n: i for i, n in enumerate(SOURCE_NAMES)}
    times, stations, channels, sources = [], [], [], []
    with open(path) as fh:
        header = fh.readline()
        while header.startswith("#"):
            header = fh.readline()
        if not header.startswith("timestamp_ps"):
            raise DomainError("not an event CSV file")
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            t, st, ch, src = line.split(",")
            times.append(int(t))
            stations.append(station_code[st])
            channels.append(int(ch))
            sources.append(source_code[src])
    times = np.asarray(times, np.int64)
    stations = np.asarray(stations, np.uint8)
    channels = np.asarray(channels, np.uint8)
    sources = np.asarray(sources, np.uint8)
    out = {}
    for s in range(3):
        m = stations == s
        order = np.lexsort((channels[m], sources[m], times[m]))
        out[s] = EventStream(s, times[m][order], sources[m][order],
                             channels[m][order])
    return out


def counts_to_json(counts: np.ndarray) -> str:
    doc = {}
    for idx in range(64):
        a, b, c = idx // 16, (idx // 4) % 4, idx % 4
        doc[f"{a},{b},{c}"] = int(counts[idx])
    return json.dumps(doc, indent=0)


def counts_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    counts = np.zeros(64, dtype=np.int64)
    for key, val in doc.items():
        a, b, c = (int(x) for x in key.split(","))
        counts[(a * 4 + b) * 4 + c] = int(val)
    return counts
