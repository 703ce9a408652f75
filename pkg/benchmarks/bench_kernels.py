"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from meshforge import _kernels
from meshforge.body_model import procedural_template
from meshforge.cloth import Panel, GarmentPattern, Material, body_colliders, build_garment
from meshforge.pose_sequence import t_pose
from meshforge.scene_gen import PerspectiveCamera


def cases():
    pattern = GarmentPattern((Panel(40, 40, 0.025),), (), (), Material())
    cloth = build_garment(pattern)
    rng = np.random.default_rng(0)
    pos = cloth.positions + rng.normal(0, 1e-3, cloth.positions.shape)
    vel = rng.normal(0, 0.1, pos.shape)
    c = cloth
    tpl = procedural_template("medium")
    caps = body_colliders(tpl, t_pose())
    cam = PerspectiveCamera((0.0, 6.0, 0.0), (0.0, 0.0, 0.0))
    P = cam.to_camera(tpl.rest_vertices)
    screen = cam.focal_px * P[:, :2] / P[:, 2:] + cam.principal_point
    body = tpl.rest_vertices[rng.integers(0, len(tpl.rest_vertices), 2000)] + rng.normal(0, 0.05, (2000, 3))

    def springs(b):
        _kernels.spring_forces(pos, vel, c.spring_i, c.spring_j, c.rest_lengths, c.stiffness, c.spring_damping, backend=b)

    def jac(b):
        _kernels.spring_jacobian_blocks(pos, c.spring_i, c.spring_j, c.rest_lengths, c.stiffness, c.spring_damping, clamp=True, backend=b)

    def capsules(b):
        p, v = body.copy(), np.zeros_like(body)
        _kernels.capsule_resolve(p, v, caps.a, caps.b, caps.radius, 1e-3, 0.3, backend=b)

    def raster(b):
        z = np.full((250, 250), np.inf)
        _kernels.rasterize(screen, P[:, 2], tpl.faces, z, backend=b)

    return {f"spring_forces ({len(c.spring_i)} springs)": springs,
            f"spring_jacobian_blocks ({len(c.spring_i)} springs)": jac,
            f"capsule_resolve ({len(body)} points, {len(caps.radius)} capsules)": capsules,
            f"rasterize ({len(tpl.faces)} faces, 250x250)": raster}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    print(f"{'kernel':55s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases().items():
        times = {}
        for b in backends:
            fn(b)
            n = 3
            times[b] = min(timeit.repeat(lambda: fn(b), number=n, repeat=args.repeat)) / n
        row = " ".join(f"{times[b] * 1e3:10.3f}ms" for b in backends)
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{name:55s} {row} {speed}")


if __name__ == "__main__":
    main()
