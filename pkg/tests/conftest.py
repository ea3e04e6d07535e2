"""
Test configuration and shared fixtures for the axisymmetric solver tests.

This module provides common test utilities and constants used across
all test modules.
"""

import os
import sys

# Ensure parent directory is in path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


# Unit cylinder used by most grid-level tests
TEST_R = 1.0
TEST_A = 1.0

# Small resolutions keep the time-stepping tests fast
TEST_N = 16
TEST_N_COARSE = 8

# Minimal run file accepted by the config parser
MINIMAL_RUN_FILE = """\
[grid]
Nr = 8
Nz = 8

[physics]
nu = 1.0

[time]
dt = 0.001
T = 0.01

[scenario]
name = rest
"""
