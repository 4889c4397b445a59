"""
Command-line tools for ctxaware.
"""
