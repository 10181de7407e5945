"""Cross-cutting concerns: logging, configuration, metrics, and reporting."""
