#!/usr/bin/env python3
"""Reference external simulator speaking the sl-sim/1 protocol.

Serves MA(2) series of length T (first argument, default 50) with the raw
series as the summary.  Each request's "seed" drives a counter-based
generator, so identical requests always produce identical replies.

Usage: ma2_external.py [T]
"""

import json
import sys

import numpy as np

MASK64 = (1 << 64) - 1


def main() -> None:
    T = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    sys.stdout.write(json.dumps({"protocol": "sl-sim/1", "d": T, "p": 2}) + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        seed = int(request["seed"]) & MASK64
        theta = request["theta"]
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
        z = gen.standard_normal(T + 2)
        y = z[2:] + theta[0] * z[1:-1] + theta[1] * z[:-2]
        sys.stdout.write(json.dumps({"summary": [float(v) for v in y]}) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
