"""Hierarchical correlation of network events.

Level 1 fuses identical five-tuples and clusters the aggregates under five
association rules (SC, VC1..VC4); level 2 chains each host pair's clusters in
time and builds a host flow graph with fan-out flags.
"""

from .aggregation import AggregateEvent, AggregatedEventSet, aggregate
from .analytics import (
    PairAnalyticsRow,
    ReductionReport,
    TimingReport,
    pair_analytics,
    reduction_report,
    top_flows,
)
from .correlation import ClusterTable, CorrelationTable, MetaEvent, cluster_summary, correlate, promote
from .events import Batch, FiveTuple, RawEvent, RuleLabel, canonical_key, five_tuple
from .graph import (
    FlowGraph,
    HyperEventGraph,
    HyperEventGroup,
    build_gflow,
    build_ghyper,
    export_graph,
    flag_high_fanout,
    load_graph,
)
from .ingest import EventSource, ParseError, SourceError, batch_stream, parse_event_record, parse_timestamp
from .pipeline import BatchResult, Config, persist_batch, process_batch, report, run_pipeline

__version__ = "0.1.0"
