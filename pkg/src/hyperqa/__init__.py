"""Knowledge-hypergraph multi-hop question answering engine."""

__version__ = "0.1.0"
