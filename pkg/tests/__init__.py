"""Test package for the contrail continual-learning simulator."""
