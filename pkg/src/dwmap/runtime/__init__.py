"""Parallel and distributed pricing of edge subprograms."""

from dwmap.runtime.pool import ThreadPricer, WorkPartition, default_workers, partition_edges
from dwmap.runtime.remote import Coordinator, RemotePricer, run_worker

__all__ = [
    "ThreadPricer",
    "WorkPartition",
    "default_workers",
    "partition_edges",
    "Coordinator",
    "RemotePricer",
    "run_worker",
]
