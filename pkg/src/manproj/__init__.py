"""Projection onto manifolds sampled with tubular noise, by iterated local polynomial regression."""
