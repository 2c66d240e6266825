# Integration test package
