# Tests for the axisymmetric solver and certificate harness
