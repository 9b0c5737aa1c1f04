"""DagEdge application package."""
