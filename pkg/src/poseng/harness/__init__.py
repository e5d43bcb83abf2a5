"""Desk-scale harness: toy model, tasks, scoring, persistence and the run pipeline."""
