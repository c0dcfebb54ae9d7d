import logging
import math
import os

from .errors import SizeError

ENV_VAR = "TVEST_ENUM_LIMIT_BITS"

log = logging.getLogger("tvest")


def enumeration_limit(default):
    raw = os.environ.get(ENV_VAR)
    if not raw:
        return default
    limit = int(raw)
    log.warning("%s=%d overrides the enumeration guard (default %d bits); "
                "exact computations may exhaust memory", ENV_VAR, limit, default)
    return limit


def assignment_bits(n_vars, alphabet_size):
    return n_vars * math.log2(alphabet_size)


def check(n_vars, alphabet_size, default_limit, what="enumeration"):
    bits = assignment_bits(n_vars, alphabet_size)
    limit = enumeration_limit(default_limit)
    if bits > limit + 1e-9:
        raise SizeError(f"{what} over {n_vars} variables with alphabet {alphabet_size} "
                        f"needs {bits:g} bits > limit {limit}", bits=bits, limit=limit)
    return bits
