"""Unit test package for meanfieldlab."""
