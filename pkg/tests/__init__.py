"""
RMT Lab Tests Package
"""
