"""Pytest path setup: allows `import oracles` from sibling test modules."""
