"""Event timelines shared by the P2P and collective simulators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from uzip.cost_model import throughput_gib_per_s

_MARKS = "#=%*+@~o"


@dataclass(frozen=True)
class Event:
    stage: str
    lane: str
    start_us: float
    end_us: float
    bytes: int = 0

    @property
    def duration_us(self) -> float:
        return self.end_us - self.start_us


@dataclass
class Timeline:
    message_bytes: int
    events: list[Event] = field(default_factory=list)
    label: str = ""

    def add(self, stage: str, lane: str, start_us: float, end_us: float, nbytes: int = 0) -> Event:
        if end_us < start_us:
            raise ValueError(f"event {stage} ends before it starts")
        ev = Event(stage, lane, float(start_us), float(end_us), int(nbytes))
        self.events.append(ev)
        return ev

    @property
    def total_us(self) -> float:
        return max((e.end_us for e in self.events), default=0.0)

    @property
    def throughput_gib_per_s(self) -> float:
        return throughput_gib_per_s(self.message_bytes, self.total_us)

    def lanes(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.events:
            seen.setdefault(e.lane, None)
        return list(seen)

    def lane_overlaps(self) -> list[tuple[Event, Event]]:
        """Pairs of events that overlap on the same lane (should be empty)."""
        bad = []
        for lane in self.lanes():
            evs = sorted((e for e in self.events if e.lane == lane), key=lambda e: (e.start_us, e.end_us))
            for a, b in zip(evs, evs[1:]):
                if b.start_us < a.end_us - 1e-9:
                    bad.append((a, b))
        return bad

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "message_bytes": self.message_bytes,
            "total_us": round(self.total_us, 6),
            "throughput_gib_s": round(self.throughput_gib_per_s, 6) if self.total_us > 0 else None,
            "events": [
                {
                    "stage": e.stage,
                    "lane": e.lane,
                    "start_us": round(e.start_us, 6),
                    "end_us": round(e.end_us, 6),
                    "bytes": e.bytes,
                }
                for e in self.events
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def gantt(self, width: int = 60) -> str:
        total = self.total_us
        lines = [f"{self.label or 'timeline'}: {total:.1f} us"]
        if total <= 0:
            return lines[0]
        name_w = max((len(l) for l in self.lanes()), default=4)
        marks: dict[str, str] = {}
        for e in self.events:
            marks.setdefault(e.stage, _MARKS[len(marks) % len(_MARKS)])
        for lane in self.lanes():
            row = [" "] * width
            for e in self.events:
                if e.lane != lane:
                    continue
                a = int(e.start_us / total * width)
                b = max(int(e.end_us / total * width), a + 1)
                for i in range(a, min(b, width)):
                    row[i] = marks[e.stage]
            lines.append(f"{lane:<{name_w}} |{''.join(row)}|")
        lines.append("  ".join(f"{m}={stage}" for stage, m in marks.items()))
        return "\n".join(lines)
