"""Experiment orchestration: configuration, statistics, suites and the command line."""
