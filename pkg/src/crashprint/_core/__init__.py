"""Hot kernels. The compiled extension is used when it was built; otherwise
the numpy fallback is selected at import. Set CRASHPRINT_PURE_PYTHON=1 to
force the fallback."""

import os

from . import _fallback

BACKEND = "python"
if not os.environ.get("CRASHPRINT_PURE_PYTHON"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

binary_search_perplexity = _impl.binary_search_perplexity
tsne_gradient = _impl.tsne_gradient
cluster_distance_sums = _impl.cluster_distance_sums

__all__ = ["BACKEND", "binary_search_perplexity", "tsne_gradient", "cluster_distance_sums"]
