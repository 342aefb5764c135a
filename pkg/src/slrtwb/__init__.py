"""Treewidth boundedness checker for inductive separation logic of relations."""

__version__ = "0.1.0"
