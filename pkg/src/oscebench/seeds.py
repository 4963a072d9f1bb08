"""Named-stream seed derivation.

All randomness in the pipeline flows from one root seed through named
streams (per station, per plan, per labeling run) so partial re-runs are
reproducible without replaying everything before them.
"""

import hashlib


def derive_seed(root_seed: int, *names: str) -> int:
    """Derive a 63-bit seed for the stream identified by ``names``."""
    payload = str(root_seed) + "/" + "/".join(names)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
