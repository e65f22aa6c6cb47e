"""scikit-learn style wrappers.

The snapshot plays the role of training data: ``fit`` binds an estimator to
one ontology (and builds whatever index it needs), after which records or
assignments are pushed through ``predict`` / ``transform``. Hyperparameters
live in ``__init__`` so ``get_params`` / ``set_params`` / ``clone`` work.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .aggregation import Assignment, percentages, tally
from .classification import DEFAULT_K, Strategy, batch_classify, candidate_index
from .ingest import AppRecord, RobotSubclass, SegmentShare
from .market import MarketConfig, app_market_shares, robot_revenue_pipeline, scale_shares
from .ontology import ActivitySnapshot, check_valid
from .search import HashingEmbedder


def check_snapshot(snapshot) -> ActivitySnapshot:
    if not isinstance(snapshot, ActivitySnapshot):
        raise TypeError(f"expected an ActivitySnapshot, got {type(snapshot).__name__}")
    return check_valid(snapshot)


def check_records(records, kind=AppRecord) -> list:
    if isinstance(records, (str, bytes)):
        raise TypeError("expected a sequence of records, got text")
    records = list(records)
    bad = [type(r).__name__ for r in records if not isinstance(r, kind)]
    if bad:
        raise TypeError(f"expected {kind.__name__} records, got {sorted(set(bad))}")
    return records


def check_assignments(assignments, snapshot: ActivitySnapshot) -> list[Assignment]:
    assignments = check_records(assignments, Assignment)
    for a in assignments:
        snapshot.require(a.node)
    return assignments


class ActivityClassifier(ClassifierMixin, BaseEstimator):
    """Predicts ontology node titles for application records.

    >>> clf = ActivityClassifier(model=stub, strategy="SPFO").fit(snapshot)  # doctest: +SKIP
    >>> clf.predict(records)  # doctest: +SKIP
    """

    def __init__(self, model=None, strategy="SPFO", k=DEFAULT_K, embedder=None,
                 parallelism=1, timeout=None):
        self.model = model
        self.strategy = strategy
        self.k = k
        self.embedder = embedder
        self.parallelism = parallelism
        self.timeout = timeout

    def fit(self, X: ActivitySnapshot, y=None):
        self.snapshot_ = check_snapshot(X)
        self.strategy_ = Strategy.parse(self.strategy)
        self.embedder_ = self.embedder or HashingEmbedder()
        if self.strategy_ is not Strategy.SPFO:
            self.index_ = candidate_index(self.snapshot_, self.embedder_)
        self.classes_ = sorted(n.title for n in self.snapshot_.nodes.values())
        return self

    def classify(self, X: Sequence[AppRecord]):
        check_is_fitted(self, "snapshot_")
        if self.model is None:
            raise ValueError("ActivityClassifier needs a model client")
        records = check_records(X)
        batch = batch_classify(self.snapshot_, records, self.strategy_, self.model, self.embedder_,
                               self.k, self.parallelism, timeout=self.timeout)
        self.errors_ = batch.errors
        return batch

    def predict(self, X: Sequence[AppRecord]) -> list[str | None]:
        """Node title per record; ``None`` where classification failed or
        the model named a node that does not exist."""
        batch = self.classify(X)
        by_name = {r.record: r for r in batch.results}
        out = []
        for rec in X:
            r = by_name.get(rec.name)
            out.append(None if r is None or r.hallucinated else r.node_title)
        return out

    def score(self, X, y, sample_weight=None):
        pred = self.predict(X)
        hits = [p == t for p, t in zip(pred, y)]
        return sum(hits) / len(hits) if hits else 0.0


class HierarchyTally(TransformerMixin, BaseEstimator):
    """Rolls assignments up the fitted ontology.

    ``transform`` returns ``{node_id: NodeTally}``; with ``normalize=True``
    it returns ``{node_id: fraction}`` relative to ``total`` (or the root).
    """

    def __init__(self, normalize=False, total=None):
        self.normalize = normalize
        self.total = total

    def fit(self, X: ActivitySnapshot, y=None):
        self.snapshot_ = check_snapshot(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "snapshot_")
        tallies = tally(self.snapshot_, check_assignments(X, self.snapshot_))
        if not self.normalize:
            return tallies
        total = self.total if self.total is not None else tallies[self.snapshot_.root].aggregated
        return percentages(tallies, total)


class AppMarketEstimator(BaseEstimator):
    """Learns per-application market shares; ``transform`` gives value in
    cents for the records it was fitted on."""

    def __init__(self, config=None):
        self.config = config

    def fit(self, X: Sequence[AppRecord], y=None):
        records = check_records(X)
        self.config_ = self.config or MarketConfig()
        self.shares_ = app_market_shares(records, self.config_)
        return self

    def transform(self, X=None) -> dict[str, int]:
        check_is_fitted(self, "shares_")
        values = scale_shares(self.shares_, self.config_.software_market)
        if X is None:
            return values
        return {r.name: values[r.name] for r in check_records(X)}

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()


class RobotMarketEstimator(BaseEstimator):
    """Fits segment price adjustment factors from subclass tables.

    ``fit(subclasses, segment_shares)``; results land in ``segments_``,
    ``subclass_revenue_`` and ``node_revenue_`` (cents).
    """

    def __init__(self, config=None, revenue_overrides=None):
        self.config = config
        self.revenue_overrides = revenue_overrides

    def fit(self, X: Sequence[RobotSubclass], y: Sequence[SegmentShare]):
        subclasses = check_records(X, RobotSubclass)
        shares = check_records(y, SegmentShare)
        self.config_ = self.config or MarketConfig()
        result = robot_revenue_pipeline(self.config_, shares, subclasses, self.revenue_overrides)
        self.segments_ = result.segments
        self.subclass_revenue_ = result.subclass_revenue
        self.node_revenue_ = result.node_revenue
        self.unallocated_ = result.unallocated
        self.factors_ = {k: v.factor for k, v in result.segments.items()}
        return self

    def predict(self, X: Sequence[RobotSubclass]) -> list[int]:
        check_is_fitted(self, "subclass_revenue_")
        return [self.subclass_revenue_.get(sc.name, 0) for sc in check_records(X, RobotSubclass)]
