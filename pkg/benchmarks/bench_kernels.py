"""Time the numba and numpy kernel backends on the hot loops of one step.

    python benchmarks/bench_kernels.py [--level 6] [--repeat 5]
"""
import argparse
import time

import numpy as np

from chbiot import kernels
from chbiot.assembly import assemble_mass, context
from chbiot.experiments import initial_state
from chbiot.material import MaterialParams
from chbiot.mesh import build_unit_square_mesh
from chbiot.quadrature import gauss_legendre_unit
from chbiot.scheme import SchemeConfig, step


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    mesh = build_unit_square_mesh(args.level)
    ctx = context(mesh)
    rng = np.random.default_rng(0)
    params = MaterialParams()
    packed = kernels.pack_material(params)
    s, w = gauss_legendre_unit(5)
    n = mesh.n_cells * ctx.nq
    phi0, phi1 = rng.uniform(-1, 1, (2, n))
    eps = rng.normal(size=(n, 3)) * 0.1
    theta = rng.normal(size=n) * 0.1
    weights = rng.random((mesh.n_cells, ctx.nq))
    state = initial_state(mesh, lambda x, y: -0.1 + 0.01 * np.sin(2 * np.pi * x)
                          * np.sin(2 * np.pi * y))
    cfg = SchemeConfig(tau=1e-5, T=1e-5)

    cases = {
        "time-average kernel": lambda: kernels.wphi_average(phi0, phi1, eps, theta, packed, s, w),
        "mass assembly": lambda: assemble_mass(mesh, weights),
        "full step": lambda: step(state, params, cfg),
    }
    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    print(f"level {args.level}: {mesh.n_vertices} vertices, {n} quadrature points")
    print(f"{'case':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    old = kernels.backend()
    try:
        for name, fn in cases.items():
            row = []
            for b in backends:
                kernels.set_backend(b)
                fn()  # warm-up (JIT compilation, caches)
                row.append(best_of(fn, args.repeat))
            speed = f"{row[0] / row[-1]:9.1f}x" if len(row) > 1 else ""
            print(f"{name:<22}" + "".join(f"{t * 1e3:10.2f}ms" for t in row) + speed)
    finally:
        kernels.set_backend(old)


if __name__ == "__main__":
    main()
