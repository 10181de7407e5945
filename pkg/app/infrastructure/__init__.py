"""Infrastructure layer: config file loading and shipped Raman gain tables."""
