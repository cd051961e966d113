"""Spectrum of the constrained Hessian at the circle and the tails of its remainders."""

import numpy as np
from scipy import linalg

from tpflow import curve as cv
from tpflow import energy as en
from tpflow import variation as va
from tpflow.constraint import constrained_hessian, restrict, tail_ratio
from tpflow.sobolev import SpectralInnerProduct


def main():
    params = en.EnergyParams.from_p(4.5)
    for N in (64, 128):
        c = cv.circle(N)
        ctx = va.FormContext(c, params)
        ip = SpectralInnerProduct(params.s, N)
        H, parts = constrained_hessian(c, params, inner=ip, ctx=ctx, return_parts=True)
        ev = linalg.eigvalsh(H.entries)
        small = ev[np.argsort(np.abs(ev))[:3]]
        print(f"N = {N}: Hessian eigenvalues min {ev[0]:.3e}  max {ev[-1]:.3e}  nearest zero {small}")
        D2 = parts["D2TP"]
        G = va.assemble(c, params, "G", ctx=ctx)
        for scale in (1.0, 2.0):
            R = va.FormMatrix(D2.entries - scale * G.entries, "R", c.digest(), params.s, N, 2)
            print(f"  tail sigma_(N/2)/sigma_1 of D2TP - {scale:g} G: {tail_ratio(restrict(R, parts['basis'])):.4e}")


if __name__ == "__main__":
    main()
