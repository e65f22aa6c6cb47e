"""Market-value allocation for software applications and robot subclasses.

Money is held as integer US cents. Shares, relative prices and the price
adjustment factor are floats; every amount that comes out is rounded back
to cents.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Mapping, Sequence

from .ingest import AppRecord, Billing, RobotSubclass, SegmentShare
from .ontology import ActivitySnapshot

CENTS = 100
BILLION = 10**9

DEFAULT_ANNUALIZATION = {
    Billing.MONTHLY.value: 12,
    Billing.YEARLY.value: 1,
    Billing.ONE_TIME.value: 1,
    Billing.FREE_ONLY.value: 0,
    Billing.UNKNOWN.value: 1,
}


def to_cents(amount) -> int:
    """Dollars (int, float, str or Decimal) -> integer cents, half-even."""
    d = amount if isinstance(amount, Decimal) else Decimal(str(amount))
    return int((d * CENTS).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def to_dollars(cents: int) -> float:
    return cents / CENTS


@dataclass(frozen=True)
class MarketConfig:
    total_ai_market: int = to_cents("186.4e9")  # cents
    robotics_market: int = to_cents("46.11e9")  # cents
    annualization: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_ANNUALIZATION))

    def __post_init__(self):
        if self.robotics_market > self.total_ai_market:
            raise ValueError("robotics market exceeds the total AI market")
        if any(v < 0 for v in self.annualization.values()):
            raise ValueError("annualization multipliers must be >= 0")
        missing = set(DEFAULT_ANNUALIZATION) - set(self.annualization)
        if missing:
            raise ValueError(f"annualization lacks billing kinds {sorted(missing)}")

    @property
    def software_market(self) -> int:
        return self.total_ai_market - self.robotics_market

    @classmethod
    def from_dict(cls, doc: Mapping) -> MarketConfig:
        kw = {}
        if "total_ai_market" in doc:
            kw["total_ai_market"] = to_cents(doc["total_ai_market"])
        if "robotics_market" in doc:
            kw["robotics_market"] = to_cents(doc["robotics_market"])
        if "annualization" in doc:
            kw["annualization"] = {**DEFAULT_ANNUALIZATION, **doc["annualization"]}
        unknown = set(doc) - {"total_ai_market", "robotics_market", "annualization"}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "total_ai_market": to_dollars(self.total_ai_market),
            "robotics_market": to_dollars(self.robotics_market),
            "software_market": to_dollars(self.software_market),
            "annualization": dict(sorted(self.annualization.items())),
        }


def load_config(data: str | bytes | None) -> MarketConfig:
    if not data:
        return MarketConfig()
    return MarketConfig.from_dict(json.loads(data))


# -- software applications ---------------------------------------------------

def app_weight(record: AppRecord, config: MarketConfig) -> float:
    return record.saves * float(record.price) * config.annualization[record.billing.value]


def app_market_shares(records: Sequence[AppRecord], config: MarketConfig | None = None) -> dict[str, float]:
    """saves x price x annualized billing, normalized over all records."""
    config = config or MarketConfig()
    weights = {r.name: app_weight(r, config) for r in records}
    total = math.fsum(weights.values())
    if not total > 0:
        raise ValueError("all application weights are zero")
    return {name: w / total for name, w in weights.items()}


def scale_shares(shares: Mapping[str, float], market: int) -> dict[str, int]:
    """Share x market in cents. Rounding residue goes to the largest shares
    (largest-remainder), so the values add up to ``market`` exactly when the
    shares sum to 1."""
    if market < 0:
        raise ValueError("market must be non-negative")
    raw = {k: s * market for k, s in shares.items()}
    floors = {k: math.floor(v) for k, v in raw.items()}
    target = round(math.fsum(raw.values()))
    residue = target - sum(floors.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - floors[k]), k))
    for k in order[:max(residue, 0)]:
        floors[k] += 1
    return floors


# -- robots ------------------------------------------------------------------

def relative_prices(subclasses: Sequence[RobotSubclass]) -> dict[str, float]:
    """Midpoint price of each subclass relative to the cheapest midpoint."""
    if not subclasses:
        raise ValueError("segment has no subclasses")
    mids = {}
    for sc in subclasses:
        if sc.price_low > sc.price_high:
            raise ValueError(f"{sc.name}: price_low exceeds price_high")
        mid = sc.midpoint
        if mid <= 0:
            raise ValueError(f"{sc.name}: non-positive midpoint price")
        mids[sc.name] = mid
    base = min(mids.values())
    return {name: float(mid / base) for name, mid in mids.items()}


def adjustment_factor(revenue: float, rows: Iterable[tuple[float, float]]) -> float:
    """x = R / sum(relative price * units)."""
    denom = math.fsum(p * u for p, u in rows)
    if not denom > 0:
        raise ZeroDivisionError("segment has no priced units")
    return revenue / denom


@dataclass(frozen=True)
class SubclassRow:
    subclass: str
    units: float
    price_low: Decimal
    price_high: Decimal
    midpoint: Decimal
    relative: float
    adjusted: float  # dollars per unit
    revenue: int  # cents


@dataclass(frozen=True)
class SegmentComputation:
    segment: str
    revenue: int  # cents
    factor: float | None  # dollars per relative unit
    rows: tuple[SubclassRow, ...]
    unallocated: int = 0  # cents

    @property
    def allocated(self) -> int:
        return sum(r.revenue for r in self.rows)


def compute_segment(segment: str, revenue: int, subclasses: Sequence[RobotSubclass],
                    units: Mapping[str, float] | None = None) -> SegmentComputation:
    """Price one segment. ``units`` overrides per-subclass unit counts (used
    for subclasses split across several segments)."""
    units = units or {sc.name: sc.units for sc in subclasses}
    rel = relative_prices(subclasses)
    rows_in = [(rel[sc.name], units[sc.name]) for sc in subclasses]
    try:
        x = adjustment_factor(to_dollars(revenue), rows_in)
    except ZeroDivisionError:
        rows = tuple(SubclassRow(sc.name, units[sc.name], sc.price_low, sc.price_high, sc.midpoint,
                                 rel[sc.name], 0.0, 0) for sc in subclasses)
        return SegmentComputation(segment, revenue, None, rows, unallocated=revenue)
    rows = []
    for sc in subclasses:
        price = x * rel[sc.name]
        rows.append(SubclassRow(sc.name, units[sc.name], sc.price_low, sc.price_high, sc.midpoint,
                                rel[sc.name], price, round(price * units[sc.name] * CENTS)))
    return SegmentComputation(segment, revenue, x, tuple(rows))


@dataclass
class RobotRevenue:
    segments: dict[str, SegmentComputation]
    subclass_revenue: dict[str, int]  # cents
    node_revenue: dict[str, int]  # cents, keyed by ontology node title
    unallocated: int  # cents
    problems: list[str] = field(default_factory=list)


def robot_revenue_pipeline(config: MarketConfig, segment_shares: Sequence[SegmentShare],
                           subclasses: Sequence[RobotSubclass],
                           revenue_overrides: Mapping[str, int] | None = None) -> RobotRevenue:
    """Segment revenue = share x robotics market (unless overridden, in
    cents). Subclasses listed under k segments put units/k into each."""
    shares = {s.segment: s.share for s in segment_shares}
    overrides = dict(revenue_overrides or {})
    members: dict[str, list[RobotSubclass]] = defaultdict(list)
    for sc in subclasses:
        if not sc.segments:
            raise ValueError(f"subclass {sc.name!r} is not mapped to any segment")
        if not sc.ontology_node:
            raise ValueError(f"subclass {sc.name!r} is not mapped to an ontology node")
        for seg in sc.segments:
            if seg not in shares and seg not in overrides:
                raise ValueError(f"subclass {sc.name!r} names unknown segment {seg!r}")
            members[seg].append(sc)

    problems: list[str] = []
    segments: dict[str, SegmentComputation] = {}
    unallocated = 0
    for seg in sorted(set(shares) | set(overrides)):
        revenue = overrides.get(seg, round(shares.get(seg, 0.0) * config.robotics_market))
        scs = members.get(seg, [])
        if not scs:
            if revenue > 0:
                problems.append(f"segment {seg!r} has revenue but no subclasses")
                unallocated += revenue
            continue
        units = {sc.name: sc.units / len(sc.segments) for sc in scs}
        comp = compute_segment(seg, revenue, scs, units)
        if comp.unallocated:
            problems.append(f"segment {seg!r} has revenue but zero units; held unallocated")
            unallocated += comp.unallocated
        segments[seg] = comp

    sub_rev: dict[str, int] = defaultdict(int)
    for comp in segments.values():
        for row in comp.rows:
            sub_rev[row.subclass] += row.revenue
    node_rev: dict[str, int] = defaultdict(int)
    for sc in subclasses:
        node_rev[sc.ontology_node] += sub_rev.get(sc.name, 0)
    return RobotRevenue(segments, dict(sub_rev), dict(sorted(node_rev.items())), unallocated, problems)


@dataclass(frozen=True)
class CombinedValue:
    software: int
    robot: int

    @property
    def total(self) -> int:
        return self.software + self.robot

    @property
    def software_fraction(self) -> float:
        return self.software / self.total if self.total else 0.0


def combine(snapshot: ActivitySnapshot, software: Mapping[str, int],
            robot: Mapping[str, int]) -> dict[str, CombinedValue]:
    """Pointwise software/robot values per node id."""
    for label, values in (("software", software), ("robot", robot)):
        for nid in values:
            if nid not in snapshot.nodes:
                raise ValueError(f"{label} value map names node {nid!r} absent from the snapshot")
    keys = sorted(set(software) | set(robot))
    return {k: CombinedValue(software.get(k, 0), robot.get(k, 0)) for k in keys}


def global_split(config: MarketConfig) -> tuple[float, float]:
    """(software fraction, robot fraction) of the total AI market."""
    return (config.software_market / config.total_ai_market,
            config.robotics_market / config.total_ai_market)


# -- reports -----------------------------------------------------------------

def _k(amount) -> str:
    v = float(amount) / 1000
    return f"{v:,.1f}k".replace(".0k", "k")


SEGMENT_COLUMNS = ("subclass", "units", "price_range", "midpoint", "relative", "adjusted", "revenue")


def segment_table(comp: SegmentComputation) -> str:
    """CSV rendering of a segment rounded like a printed table: prices in
    thousands, relative price to one decimal, revenue in billions."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEGMENT_COLUMNS)
    for r in comp.rows:
        units = int(r.units) if float(r.units).is_integer() else round(r.units, 2)
        w.writerow([r.subclass, units, f"{_k(r.price_low)}-{_k(r.price_high)}", _k(r.midpoint),
                    f"{r.relative:.1f}", _k(round(r.adjusted)), f"{r.revenue / CENTS / BILLION:.1f} bn"])
    w.writerow(["Total", "", "", "", "", "", f"{comp.allocated / CENTS / BILLION:.1f} bn"])
    return buf.getvalue()


def segment_dict(comp: SegmentComputation) -> dict:
    return {
        "segment": comp.segment,
        "revenue": to_dollars(comp.revenue),
        "factor": comp.factor,
        "unallocated": to_dollars(comp.unallocated),
        "rows": [{
            "subclass": r.subclass, "units": r.units, "price_low": float(r.price_low),
            "price_high": float(r.price_high), "midpoint": float(r.midpoint), "relative": r.relative,
            "adjusted": r.adjusted, "revenue": to_dollars(r.revenue),
        } for r in comp.rows],
    }
