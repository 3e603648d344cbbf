"""Stochastic encounter-mating model of monogamous pair formation."""
