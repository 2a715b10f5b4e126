"""rorel: joint multi-relation extraction over whole-document relation
matrices, plus a statistics toolkit for the dependencies between relations."""

__version__ = "0.1.0"
