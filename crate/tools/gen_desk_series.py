"""Writes the synthetic series of the desk dataset: history.csv and profiles.csv.

Deterministic; rerun after editing the anchor points below.
"""
import math
import random
import sys
from pathlib import Path

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "desk"

# Crude-steel and aluminum production anchors in Mt, linearly interpolated.
STEEL = [(1870, 0.5), (1900, 7.0), (1913, 17.0), (1930, 12.0), (1950, 14.0), (1960, 34.0),
         (1974, 53.0), (1990, 44.0), (2007, 48.5), (2009, 32.7), (2019, 39.7)]
ALUMINUM = [(1900, 0.0), (1930, 0.03), (1950, 0.1), (1960, 0.3), (1980, 1.0), (2000, 1.4),
            (2019, 1.3)]


def interp(points, year):
    for (y0, q0), (y1, q1) in zip(points, points[1:]):
        if y0 <= year <= y1:
            return q0 + (q1 - q0) * (year - y0) / (y1 - y0)
    raise ValueError(year)


def history():
    lines = ["# synthetic production history, t", "material,year,quantity_tonnes"]
    for name, pts in (("steel", STEEL), ("aluminum", ALUMINUM)):
        for y in range(pts[0][0], pts[-1][0] + 1):
            lines.append(f"{name},{y},{interp(pts, y) * 1e6:.1f}")
    (OUT / "history.csv").write_text("\n".join(lines) + "\n")


def profiles():
    rng = random.Random(20200101)
    hours = 8760
    cloud = [0.35 + 0.65 * rng.random() for _ in range(365)]
    pv = []
    for h in range(hours):
        d, t = divmod(h, 24)
        season = 1.0 + 0.45 * math.cos(2 * math.pi * (d - 172) / 365)
        sun = max(0.0, math.sin(math.pi * (t - 6) / 12)) if 6 <= t <= 18 else 0.0
        pv.append(sun * season * cloud[d])
    wind, x = [], 0.0
    for h in range(hours):
        d = h // 24
        x = 0.97 * x + 0.243 * rng.gauss(0.0, 1.0)
        season = 1.0 + 0.35 * math.cos(2 * math.pi * d / 365)
        wind.append(max(0.0, season * (1.0 + 0.6 * x)))
    load = []
    for h in range(hours):
        d, t = divmod(h, 24)
        daily = 1.0 + 0.18 * math.sin(math.pi * (t - 6) / 12) if 6 <= t <= 22 else 0.85
        weekly = 0.9 if d % 7 in (5, 6) else 1.0
        load.append(daily * weekly * (1.0 + 0.1 * math.cos(2 * math.pi * d / 365)))

    def rescale(v, mean):
        s = mean * len(v) / sum(v)
        return [min(1.0, a * s) for a in v]

    pv = rescale(pv, 0.11)
    wind = rescale(wind, 0.30)
    total = math.fsum(load)
    load = [a / total for a in load]
    lines = ["step,load,pv,wind"]
    for h in range(hours):
        lines.append(f"{h},{load[h]!r},{pv[h]:.6f},{wind[h]:.6f}")
    (OUT / "profiles.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    history()
    profiles()
