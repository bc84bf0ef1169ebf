"""Operator-facing executables: gateway daemon, fleet simulator, protocol client, bench."""
