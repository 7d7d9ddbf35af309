"""
Test package for the DA seq2seq NLG system.
"""
