"""Discrete circle energy against the closed-form value, and how fast the gap closes."""

import math

from tpflow import curve as cv
from tpflow import energy as en


def main():
    for p in (4.2, 4.5, 4.8):
        params = en.EnergyParams.from_p(p)
        ref = en.circle_energy_reference(p)
        print(f"p = {p}: reference {ref:.15g}")
        prev = None
        for N in (32, 64, 128, 256, 512):
            err = abs(en.tp_energy(cv.circle(N), params) - ref) / ref
            order = f"  order {math.log2(prev / err):5.2f}" if prev and err > 0 else ""
            print(f"  N = {N:4d}  rel err {err:.3e}{order}")
            prev = err


if __name__ == "__main__":
    main()
