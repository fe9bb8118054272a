"""revq: no-reference quality assessment for rendered videos.

Two-stream metric (fragment-based image quality plus motion-compensated
temporal stability) with training, evaluation, subjective-study tooling, and
an annotation-collection service.
"""

__version__ = "0.1.0"
