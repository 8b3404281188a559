"""Scenario scripting, exhaustive protocol checking, and load measurement."""
