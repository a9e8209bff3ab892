"""Desk-scale adversarial-training laboratory.

Small dense classifiers, a family of one-step and iterative l-infinity
attacks, a deterministic training loop, and probes for catching the sudden
robustness collapse known as catastrophic overfitting.
"""

__version__ = "0.1.0"
