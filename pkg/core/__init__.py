"""Sequence-to-sequence generation of sentences and sentence plans from dialogue acts."""
