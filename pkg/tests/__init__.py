"""
Test suite for the attention caption engine
"""
