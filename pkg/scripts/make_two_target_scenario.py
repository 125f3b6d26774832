"""Generate the reference two-target scenario file.

Each target is a chain of polynomial pieces in local time ``s = t - start``.
Pieces continue the previous piece's end position and velocity; the curving
pieces are least-squares polynomial fits to a smooth turning profile so that
low-order fits lag visibly while order-3 fits stay near the noise floor.

    python scripts/make_two_target_scenario.py src/tfot/scenarios/two_targets.yaml
"""
from __future__ import annotations

import argparse

import numpy as np
import yaml

STEPS = 100


def _continue(p0, v0, extra, start, end, degree):
    """Polynomial with value p0 and slope v0 at s=0 plus a fitted extra term.

    ``extra(s)`` must vanish with zero slope at s=0; it is matched by powers
    s^2..s^degree in least squares on a dense grid.
    """
    span = float(end - start)
    s = np.linspace(0.0, span, 400)
    coeffs = np.zeros((degree + 1, 2))
    coeffs[0], coeffs[1] = p0, v0
    if degree >= 2:
        u = s / span
        B = np.column_stack([u**i for i in range(2, degree + 1)])
        sol, *_ = np.linalg.lstsq(B, extra(s), rcond=None)
        coeffs[2:] = sol / span ** np.arange(2, degree + 1)[:, None]
    return coeffs


def _end_state(coeffs, span):
    powers = span ** np.arange(coeffs.shape[0])
    pos = powers @ coeffs
    dpow = np.array([i * span ** (i - 1) if i else 0.0 for i in range(coeffs.shape[0])])
    return pos, dpow @ coeffs


def _chain(p0, v0, pieces):
    segs = []
    p, v = np.asarray(p0, float), np.asarray(v0, float)
    for start, end, degree, extra in pieces:
        C = _continue(p, v, extra, start, end, degree)
        segs.append({"start": start, "end": end, "coeffs": [[float(x) for x in row] for row in C]})
        p, v = _end_state(C, float(end - start))
    return segs


def turning(ax, ay, period_x, period_y):
    wx, wy = 2 * np.pi / period_x, 2 * np.pi / period_y

    def f(s):
        return np.column_stack([ax * (1 - np.cos(wx * s)), ay * (1 - np.cos(wy * s))])
    return f


def constant_accel(a):
    a = np.asarray(a, float)
    return lambda s: 0.5 * np.outer(s**2, a)


def build() -> dict:
    target_a = _chain((-140.0, -105.0), (2.5, 1.5), [
        (1, 20, 1, None),
        (20, 70, 12, turning(68.0, -52.0, 25.0, 50.0)),
        (70, 100, 2, constant_accel((-0.08, 0.12))),
    ])
    target_b = _chain((60.0, 120.0), (-1.0, 1.2), [
        (1, 40, 12, turning(-60.0, 60.0, 19.5, 39.0)),
        (40, 100, 3, lambda s: np.column_stack([0.02 * s**2 - 0.0002 * s**3, -0.015 * s**2])),
    ])
    return {
        "name": "two_targets",
        "kind": "polynomial",
        "steps": STEPS,
        "dt": 1.0,
        "window": 10,
        "targets": [{"id": 0, "segments": target_a}, {"id": 1, "segments": target_b}],
        "measurement": {"kind": "LinearPosition", "noise_cov": [[1.0, 0.0], [0.0, 1.0]]},
        "detection_probability": 1.0,
        "clutter_rate": 15.0,
        "region": [[-170.0, 150.0], [-150.0, 300.0]],
        "association": "truth",
        "seed": 2000,
        "metrics": {"c": 20.0, "p": 2.0, "c_s": 20.0, "c_t": 20.0, "substeps": 10},
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    args = ap.parse_args()
    cfg = build()
    header = ("# Two polynomial targets in clutter.  Generated by\n"
              "# scripts/make_two_target_scenario.py; edit the script, not this file.\n")
    with open(args.out, "w") as fh:
        fh.write(header)
        yaml.safe_dump(cfg, fh, sort_keys=False, default_flow_style=None, width=120)


if __name__ == "__main__":
    main()
