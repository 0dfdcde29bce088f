"""Regenerate reference_frame_ious.json from per-threshold hit counts.

Each column is a list of per-frame IoUs. A frame that clears threshold t but
not t + 0.1 gets the bin midpoint t + 0.05; frames below 0.1 get 0.05. The
order is shuffled with a fixed seed so nothing depends on sorted input.
"""

import json
from pathlib import Path

import numpy as np

THRESHOLDS_DESC = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

# hits at IoU >= 0.9, 0.8, ..., 0.1 and the number of frames in the column
COUNTS = {
    "rear": (1608, [36, 174, 399, 639, 720, 819, 1002, 1152, 1317]),
    "fused_rear": (1608, [327, 780, 972, 1098, 1242, 1359, 1443, 1515, 1563]),
    "side": (1608, [402, 629, 773, 913, 1018, 1171, 1255, 1353, 1470]),
    "fused_side": (1608, [480, 738, 885, 1074, 1170, 1245, 1338, 1389, 1437]),
    "rear_no_intensity": (536, [0, 0, 1, 1, 5, 11, 16, 21, 25]),
    "fused_rear_no_intensity": (536, [40, 100, 158, 221, 262, 296, 384, 402, 420]),
    "late_rear": (528, [47, 90, 154, 221, 265, 317, 381, 425, 460]),
}


def column(n: int, hits, rng) -> list:
    vals, prev = [], 0
    for t, c in zip(THRESHOLDS_DESC, hits):
        vals += [round(t + 0.05, 2)] * (c - prev)
        prev = c
    vals += [0.05] * (n - prev)
    vals = np.array(vals)
    rng.shuffle(vals)
    return [float(v) for v in vals]


def main() -> None:
    rng = np.random.default_rng(20240601)
    doc = {name: column(n, hits, rng) for name, (n, hits) in COUNTS.items()}
    out = Path(__file__).with_name("reference_frame_ious.json")
    out.write_text(json.dumps(doc, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
