# tests/__init__.py
"""
Tests for ForceGrasp Lab: physics, expert, dataset, policy, evaluation and CLI.
"""
