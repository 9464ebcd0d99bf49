"""
Utility modules for configuration.
"""
