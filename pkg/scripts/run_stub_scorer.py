#!/usr/bin/env python3
"""Run the deterministic stub scorer on a TCP port.

Usage: python3 scripts/run_stub_scorer.py [--host HOST] [--port PORT]

The stub speaks the same wire protocol as the real scorer service and
returns hash-derived scores, so the whole pipeline can be exercised
offline:

    python3 scripts/run_stub_scorer.py --port 7180 &
    whymine score --workdir corpus --method nli-transcript \
        --endpoint 127.0.0.1:7180
"""

import sys

from whymine.stubscorer import main

if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
