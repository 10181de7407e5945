# Interfaces module
