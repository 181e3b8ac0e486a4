"""core — shared foundations: record types, keyed streams, polynomial roots, state files."""
