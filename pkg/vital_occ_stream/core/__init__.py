"""
Shared plumbing: exceptions, class tables and config loading.
"""
