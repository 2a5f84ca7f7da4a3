"""Probing multimodality of twin-pair Gaussian mixture likelihoods with NUTS-seeded multistart."""
