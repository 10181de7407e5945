# Tests for interfaces module
