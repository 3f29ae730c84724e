"""Hot numeric kernels: compiled Cython core with a pure fallback.

The compiled backend is used when the extension built; set
``VISCOH_PURE_PYTHON=1`` before import to force the fallback.  Both backends
expose the same four functions and the same tie rules:

- ``lcs_length(a, b)``: longest common subsequence of two int32 token arrays.
- ``rouge_f1_block(flat_a, off_a, flat_b, off_b)``: pairwise ROUGE-L F1
  between two token-row collections in flattened (values, offsets) form.
- ``assign_points(X, C)``: squared-Euclidean nearest centroid per row of X,
  ties to the smallest centroid index.
- ``distance_rowsums(X)``: per row, the sum of Euclidean distances to every
  row of X (medoid objective numerator).
"""

import os

from . import pure as _pure

backend = "pure"
_impl = _pure
if os.environ.get("VISCOH_PURE_PYTHON", "") != "1":
    try:
        from . import _cykernels as _compiled

        _impl = _compiled
        backend = "compiled"
    except ImportError:
        pass

lcs_length = _impl.lcs_length
rouge_f1_block = _impl.rouge_f1_block
assign_points = _impl.assign_points
distance_rowsums = _impl.distance_rowsums


def flatten_token_rows(rows):
    """Pack a list of int token sequences into (int32 values, int64 offsets)."""
    import numpy as np

    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, row in enumerate(rows):
        offsets[i + 1] = offsets[i] + len(row)
    flat = np.empty(int(offsets[-1]), dtype=np.int32)
    for i, row in enumerate(rows):
        flat[offsets[i]:offsets[i + 1]] = row
    return flat, offsets
