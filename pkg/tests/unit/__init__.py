"""
RMT Lab Unit Tests Package
"""
