"""HTTP face of the coordinator: commands, queries, and the event stream."""
