"""One-shot object-to-object affordance grounding and affordance-conditioned pose optimization."""

__version__ = "0.1.0"
