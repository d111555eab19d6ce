"""Host availability traces: file format, synthetic churn and window selection.

File format (one event per line, single-space separated)::

    #churn-trace v1
    #window 0 3600
    #hosts h00 h01 h02
    #initially-down h02
    12.5 h00 DOWN
    300 h02 UP

Only the first header line is mandatory.  Hosts start UP unless listed as
initially down, and each host's events must alternate from that state.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path

HEADER = "#churn-trace v1"
UP, DOWN = "UP", "DOWN"


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class ChurnTrace:
    hosts: tuple
    events: tuple                       # (timestamp, host_id, state)
    window: tuple = (0.0, 0.0)
    initially_down: frozenset = field(default_factory=frozenset)

    @property
    def host_count(self) -> int:
        return len(self.hosts)

    def validate(self) -> None:
        start, end = self.window
        if end < start:
            raise TraceError(f"window end {end} precedes start {start}")
        known = set(self.hosts)
        state = {h: (DOWN if h in self.initially_down else UP) for h in self.hosts}
        last = -math.inf
        for i, (t, host, st) in enumerate(self.events):
            if t < last:
                raise TraceError(f"event {i}: timestamp {t} out of order")
            last = t
            if not start <= t <= end:
                raise TraceError(f"event {i}: timestamp {t} outside window [{start}, {end}]")
            if host not in known:
                raise TraceError(f"event {i}: unknown host {host}")
            if st not in (UP, DOWN):
                raise TraceError(f"event {i}: bad state {st!r}")
            if state[host] == st:
                raise TraceError(f"host {host}: consecutive {st} events at t={t}")
            state[host] = st

    def state_at(self, host: str, t: float) -> str:
        """Host state just after all events at times <= t."""
        st = DOWN if host in self.initially_down else UP
        for ts, h, s in self.events:
            if ts > t:
                break
            if h == host:
                st = s
        return st

    def up_fraction(self) -> float:
        """Fraction of host-seconds spent UP within the window."""
        start, end = self.window
        span = end - start
        if span <= 0 or not self.hosts:
            return 1.0
        up_time = 0.0
        for host in self.hosts:
            st = DOWN if host in self.initially_down else UP
            since = start
            for t, h, s in self.events:
                if h != host:
                    continue
                if st == UP:
                    up_time += t - since
                st, since = s, t
            if st == UP:
                up_time += end - since
        return up_time / (span * len(self.hosts))


def _fmt_time(t: float) -> str:
    t = float(t)
    return str(int(t)) if t.is_integer() else repr(t)


def serialize(trace: ChurnTrace) -> str:
    lines = [HEADER,
             f"#window {_fmt_time(trace.window[0])} {_fmt_time(trace.window[1])}",
             "#hosts " + " ".join(trace.hosts)]
    if trace.initially_down:
        lines.append("#initially-down " + " ".join(sorted(trace.initially_down)))
    lines += [f"{_fmt_time(t)} {h} {s}" for t, h, s in trace.events]
    return "\n".join(lines) + "\n"


def parse(text: str, source: str = "<trace>") -> ChurnTrace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise TraceError(f"{source}:1: missing '{HEADER}' header")
    window = None
    hosts: list[str] | None = None
    down: set[str] = set()
    events = []
    seen_hosts: list[str] = []
    state: dict[str, str] = {}
    last = -math.inf
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].partition(" ")
            args = rest.split()
            if events and key in ("window", "hosts", "initially-down"):
                raise TraceError(f"{source}:{lineno}: header '{key}' after events")
            if key == "window":
                try:
                    window = (float(args[0]), float(args[1]))
                except (IndexError, ValueError):
                    raise TraceError(f"{source}:{lineno}: bad window line {raw!r}") from None
            elif key == "hosts":
                hosts = args
            elif key == "initially-down":
                down.update(args)
            continue
        parts = line.split(" ")
        if len(parts) != 3:
            raise TraceError(f"{source}:{lineno}: expected 'timestamp host UP|DOWN', got {raw!r}")
        ts, host, st = parts
        try:
            t = float(ts)
        except ValueError:
            raise TraceError(f"{source}:{lineno}: bad timestamp {ts!r}") from None
        if not math.isfinite(t):
            raise TraceError(f"{source}:{lineno}: bad timestamp {ts!r}")
        if st not in (UP, DOWN):
            raise TraceError(f"{source}:{lineno}: state must be UP or DOWN, got {st!r}")
        if t < last:
            raise TraceError(f"{source}:{lineno}: timestamp {ts} earlier than previous event")
        last = t
        if hosts is not None and host not in hosts:
            raise TraceError(f"{source}:{lineno}: host {host} not declared in #hosts")
        if host not in state:
            seen_hosts.append(host)
            state[host] = DOWN if host in down else UP
        if state[host] == st:
            raise TraceError(f"{source}:{lineno}: host {host} has two consecutive {st} events")
        state[host] = st
        events.append((t, host, st))
    if hosts is None:
        hosts = sorted(set(seen_hosts) | down)
    if window is None:
        window = (0.0, events[-1][0] if events else 0.0)
    trace = ChurnTrace(tuple(hosts), tuple(events), window, frozenset(down))
    try:
        trace.validate()
    except TraceError as exc:
        raise TraceError(f"{source}: {exc}") from None
    return trace


def load_trace(path) -> ChurnTrace:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc.strerror or exc}") from None
    return parse(text, str(path))


def save_trace(trace: ChurnTrace, path) -> None:
    Path(path).write_text(serialize(trace))


def host_ids(n_hosts: int) -> tuple:
    width = max(2, len(str(n_hosts - 1)))
    return tuple(f"h{i:0{width}d}" for i in range(n_hosts))


def generate_trace(n_hosts: int, horizon: float, mtbf: float, mttr: float,
                   seed: int) -> ChurnTrace:
    """Alternating renewal churn: exponential up-times (mean mtbf) and down-times (mean mttr).

    ``mtbf=math.inf`` gives a trace without failures.  Timestamps are rounded
    to milliseconds so the text form round-trips exactly.
    """
    if n_hosts < 1:
        raise TraceError("n_hosts must be at least 1")
    if not horizon > 0:
        raise TraceError("horizon must be positive")
    if not mtbf > 0 or not mttr > 0:
        raise TraceError("mtbf and mttr must be positive")
    rng = random.Random(seed)
    hosts = host_ids(n_hosts)
    events = []
    for host in hosts:
        t, up = 0.0, True
        while True:
            mean = mtbf if up else mttr
            if math.isinf(mean):
                break
            t = round(t + rng.expovariate(1.0 / mean), 3)
            if t > horizon:
                break
            up = not up
            events.append((t, host, UP if up else DOWN))
    events.sort(key=lambda e: (e[0], e[1]))
    return ChurnTrace(hosts, tuple(events), (0.0, float(horizon)))


def activity_counts(trace: ChurnTrace, window_length: float) -> list[tuple[float, int]]:
    """State-change counts per aligned window of ``window_length`` seconds."""
    start, end = trace.window
    if not window_length > 0:
        raise TraceError("window_length must be positive")
    if end - start < window_length:
        raise TraceError(f"trace spans {end - start}s, shorter than window {window_length}s")
    n = int((end - start) // window_length)
    counts = [0] * n
    for t, _, _ in trace.events:
        k = int((t - start) // window_length)
        if k == n and t == start + n * window_length:
            k = n - 1
        if 0 <= k < n:
            counts[k] += 1
    return [(start + k * window_length, c) for k, c in enumerate(counts)]


def busiest_window(trace: ChurnTrace, window_length: float) -> tuple[float, float]:
    """The aligned window with the most state changes; earliest wins ties."""
    counts = activity_counts(trace, window_length)
    best_start, _ = max(counts, key=lambda sc: (sc[1], -sc[0]))
    return (best_start, best_start + window_length)


def slice_trace(trace: ChurnTrace, start: float, end: float, rebase: bool = True) -> ChurnTrace:
    """Cut ``[start, end]`` out of a trace, carrying each host's state at ``start``."""
    down = frozenset(h for h in trace.hosts if trace.state_at(h, start) == DOWN)
    offset = start if rebase else 0.0
    events = tuple((round(t - offset, 3), h, s) for t, h, s in trace.events if start < t <= end)
    window = (start - offset, end - offset)
    return ChurnTrace(trace.hosts, events, window, down)
