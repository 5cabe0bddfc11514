"""Configuration, persistence, experiments and the ``bdb`` command line."""
