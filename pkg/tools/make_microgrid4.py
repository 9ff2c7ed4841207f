"""Regenerate src/droopcert/data/microgrid4.json.

Four inverters on a ring of resistive low-voltage lines (R/X about 3) with a
small resistive load at every bus.  Admittance entries follow Y = G + jB:
off-diagonal entries are -1/z, the diagonal holds the sum of line admittances
plus the shunt.
"""

import json
import sys
from pathlib import Path

Z = {(1, 2): (0.66, 0.22), (2, 3): (0.92, 0.26), (3, 4): (0.55, 0.20), (4, 1): (0.79, 0.24)}
TAU = {1: 0.4, 2: 0.5, 3: 0.3, 4: 0.45}
P_NOM = {1: 0.3, 2: 0.5, 3: 0.2, 4: 0.4}
Q_NOM = {1: 0.1, 2: 0.05, 3: 0.0, 4: 0.08}
SHUNT_G = {1: 0.05, 2: 0.08, 3: 0.04, 4: 0.06}


def build() -> dict:
    lines = []
    diag = {n: [SHUNT_G[n], 0.0] for n in TAU}
    for (i, k), (r, x) in Z.items():
        d = r * r + x * x
        g, b = r / d, -x / d
        lines.append({"from": i, "to": k, "g": round(-g, 6), "b": round(-b, 6)})
        for n in (i, k):
            diag[n][0] += g
            diag[n][1] += b
    for n in sorted(diag):
        lines.append({"from": n, "to": n, "g": round(diag[n][0], 6), "b": round(diag[n][1], 6)})
    return {
        "format_version": 1,
        "nodes": [{"id": n, "tau": TAU[n], "lambda_p": 2.51, "lambda_q": 0.2, "v_nom": 1.0,
                   "p_nom": P_NOM[n], "q_nom": Q_NOM[n]} for n in sorted(TAU)],
        "lines": lines,
        "safety": {"s_v": [-0.4, 0.2], "s_omega_hz": [-3.0, 3.0],
                   "s_theta": [-0.5235987755982988, 0.5235987755982988],
                   "delta_v": 0.02, "delta_omega_hz": 0.12},
    }


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "src" / "droopcert" / "data" / "microgrid4.json"
    out.write_text(json.dumps(build(), indent=2) + "\n")
    print(f"wrote {out}")
