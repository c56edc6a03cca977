"""
IDQF Forwarding Simulator - CLI Commands Package
"""
