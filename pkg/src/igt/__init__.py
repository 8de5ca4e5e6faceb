"""Self-supervised insider-threat detection from behaviour images.

Activity logs are bucketed per user, turned into count features, rendered as
``x x^T`` images and pushed through a set of geometric transformations. A
small classifier learns to recognise which transformation was applied; images
whose transformations it recognises poorly (under a Dirichlet model of its
softmax outputs on training data) are scored as anomalous.
"""

__version__ = "0.1.0"
