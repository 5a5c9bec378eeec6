# src/__init__.py
"""
ForceGrasp Lab
Simulated adaptive grasping with force feedback, distilled into diffusion policies.
"""

__version__ = "1.0.0"
__author__ = "ForceGrasp Team"
