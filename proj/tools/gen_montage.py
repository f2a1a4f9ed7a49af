#!/usr/bin/env python3
# Copyright (c) 2026 The eegalign Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates data/montage65.txt: an idealized spherical 10-10 layout.

Head frame: +x right, +y nose, +z vertex. Midline and equator electrodes sit
at 10% arc steps; the lateral electrodes of a row are spaced evenly along the
great circle from the row's midline electrode to its equator electrode.
"""
import math
import sys


def sph(polar_deg, azimuth_deg):
    # azimuth measured from +y (nose) towards +x (right)
    p, a = math.radians(polar_deg), math.radians(azimuth_deg)
    return (math.sin(p) * math.sin(a), math.sin(p) * math.cos(a), math.cos(p))


def slerp(u, v, t):
    dot = max(-1.0, min(1.0, sum(a * b for a, b in zip(u, v))))
    om = math.acos(dot)
    if om < 1e-12:
        return u
    s0, s1 = math.sin((1 - t) * om) / math.sin(om), math.sin(t * om) / math.sin(om)
    w = [s0 * a + s1 * b for a, b in zip(u, v)]
    n = math.sqrt(sum(c * c for c in w))
    return tuple(c / n for c in w)


def main():
    pos = {}
    # midline, polar angle from vertex (negative = posterior)
    midline = {"Fpz": 90, "AFz": 67.5, "Fz": 45, "FCz": 22.5, "Cz": 0,
               "CPz": -22.5, "Pz": -45, "POz": -67.5, "Oz": -90}
    for name, p in midline.items():
        pos[name] = sph(abs(p), 0 if p >= 0 else 180)
    pos["Nz"] = sph(112.5, 0)
    pos["Iz"] = sph(112.5, 180)
    # equator ring, right side azimuths; left side mirrored
    ring = [("Fp", 18), ("AF", 36), ("F", 54), ("FT", 72), ("T", 90),
            ("TP", 108), ("P", 126), ("PO", 144), ("O", 162)]
    for prefix, az in ring:
        right = {"Fp": "Fp2", "O": "O2"}.get(prefix, prefix + "8")
        left = {"Fp": "Fp1", "O": "O1"}.get(prefix, prefix + "7")
        pos[right] = sph(90, az)
        pos[left] = sph(90, -az)
    pos["P10"] = sph(112.5, 126)
    pos["P9"] = sph(112.5, -126)
    # rows with four lateral steps: index 1,3,5 (left) / 2,4,6 (right)
    rows = {"F": ("Fz", "F"), "FC": ("FCz", "FT"), "C": ("Cz", "T"),
            "CP": ("CPz", "TP"), "P": ("Pz", "P")}
    for prefix, (mid, edge) in rows.items():
        for step, (li, ri) in enumerate([(1, 2), (3, 4), (5, 6)], start=1):
            pos[f"{prefix}{ri}"] = slerp(pos[mid], pos[f"{edge}8"], step / 4)
            pos[f"{prefix}{li}"] = slerp(pos[mid], pos[f"{edge}7"], step / 4)
    for prefix in ("AF", "PO"):
        mid = prefix + "z"
        pos[f"{prefix}4"] = slerp(pos[mid], pos[f"{prefix}8"], 0.5)
        pos[f"{prefix}3"] = slerp(pos[mid], pos[f"{prefix}7"], 0.5)

    order = ["Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8",
             "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
             "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8",
             "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
             "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
             "P9", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "P10",
             "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2", "Iz", "Nz"]
    assert len(order) == 65 and len(set(order)) == 65 and set(order) == set(pos)
    out = sys.stdout
    out.write("# name x y z  (unit sphere; +x right, +y nose, +z vertex)\n")
    for name in order:
        x, y, z = pos[name]
        out.write(f"{name} {x:.17g} {y:.17g} {z:.17g}\n")


if __name__ == "__main__":
    main()
