"""Domain layer: entities, ports, and pure utilities."""


