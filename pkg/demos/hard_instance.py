"""Build a bump-plus-needle hard instance and inspect its profile.

Run with ``python demos/hard_instance.py``.
"""

import numpy as np

from cascade_bandits import KernelSpec, build_hard_instance, hard_family


def main():
    spec = KernelSpec(nu=1.5, lengthscale=0.2)
    inst = build_hard_instance(spec, 5.0, m=3, d=1, eps=0.05)
    print(f"u={inst.u}  u_tilde={inst.u_tilde}  alpha={inst.alpha:.6f}")
    print(f"eps1={inst.eps1:.6g}  w={inst.w:.6g}  layer peaks={[round(h, 6) for h in inst.heights]}")
    x = np.linspace(0.0, 1.0, 20001)[:, None]
    g = inst(x)
    c = float(inst.center[0])
    print(f"max g={g.max():.6f} at x={x[np.argmax(g), 0]:.5f} (center {c:.5f})")
    outside = np.abs(x[:, 0] - c) > inst.w
    print(f"max |g| outside the support: {np.abs(g[outside]).max():.2e}")
    fam = hard_family(spec, 5.0, m=3, d=1, eps=0.05)
    print(f"family size M={len(fam.instances)}")


if __name__ == "__main__":
    main()
