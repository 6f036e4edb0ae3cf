"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--nx 64] [--repeat 5]

Times the element strain kernel (viscous residual + Jacobian on a P2 mesh),
the mollifier weight kernel (slip-wall Gauss points against all volume
quadrature points) and one full frozen-operator assembly, for each backend.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ersolve import kernels
from ersolve.mesh import rectangle_mesh
from ersolve.mollify import MollifierKernel, MollifierOperator
from ersolve.verify import default_er_system


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    system = default_er_system(rectangle_mesh(args.nx, args.nx))
    rng = np.random.default_rng(0)
    u = rng.normal(size=system.n_free)
    eps = system.strain_at_points(u)
    c = np.ones(eps.shape[:2])
    src = system.geom.points.reshape(-1, 2)
    w = system.geom.wdet.ravel()
    tgt = system.s1.points.reshape(-1, 2)
    kern = MollifierKernel(4.0 / args.nx)
    frozen = system.zero_frozen()

    backends = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    cases = {
        "strain kernel": lambda b: kernels.strain_local(system._S, system.geom.wdet, c, c, eps, backend=b),
        "mollifier weights": lambda b: MollifierOperator(src, w, tgt, kern, backend=b),
        "viscous assembly": lambda b: system.viscous(u, frozen.mu, backend=b),
    }
    print(f"mesh {args.nx}x{args.nx}: {system.mesh.n_triangles} triangles, {system.n_free} velocity "
          f"unknowns, {len(tgt)} slip-wall points; best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        t = [best(lambda: fn(b), args.repeat) for b in backends]
        line = f"{name:<20}" + "".join(f"{x * 1e3:>10.2f}ms" for x in t)
        if len(t) > 1:
            line += f"{t[0] / t[1]:>11.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled extension not built; only the Python fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
