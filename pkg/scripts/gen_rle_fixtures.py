"""Regenerate the RLE fixture vectors shared by the Python and TS test suites."""
import json
from pathlib import Path

import numpy as np

from pair.rle import rle_encode

OUT = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures" / "rle_fixtures.json"


def main():
    rng = np.random.default_rng(2024)
    cases = []
    shapes = [(1, 1), (4, 4), (5, 7), (8, 8), (16, 16), (32, 32)]
    for h, w in shapes:
        for density in (0.0, 0.2, 0.5, 1.0):
            mask = rng.random((h, w)) < density
            cases.append(
                {
                    "size": [h, w],
                    "pixels": mask.astype(int).ravel().tolist(),
                    "counts": rle_encode(mask),
                }
            )
    # structured edge cases
    single = np.zeros((6, 6), dtype=bool)
    single[2, 3] = True
    checker = np.indices((8, 8)).sum(axis=0) % 2 == 0
    for mask in (single, checker):
        cases.append(
            {
                "size": list(mask.shape),
                "pixels": mask.astype(int).ravel().tolist(),
                "counts": rle_encode(mask),
            }
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"cases": cases}, indent=1))
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
