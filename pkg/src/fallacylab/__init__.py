"""Three-stage logical fallacy identification framework.

Detection (binary), coarse-grained, and fine-grained classification with
instance-based reasoning, prototype-based reasoning, knowledge injection,
curriculum learning, and data augmentation, each with native explanations.
"""

__version__ = "0.1.0"
