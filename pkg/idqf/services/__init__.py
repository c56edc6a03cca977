"""
IDQF Forwarding Simulator - Services Package
"""
