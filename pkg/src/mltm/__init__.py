"""Multi-label topic models: Flat-, Prior- and Dependency-LDA."""

__version__ = "0.1.0"
