"""Relational databases as heterogeneous graphs: ingestion, tasks, sampling, profiling and training."""
