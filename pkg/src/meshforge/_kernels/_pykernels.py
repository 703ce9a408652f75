"""Numpy reference implementations of the hot kernels.

Signatures and results match the compiled ``_ckernels`` module; tests run
both backends against each other.
"""
import numpy as np


def spring_forces(pos, vel, si, sj, rest, k, kd):
    d = pos[si] - pos[sj]
    length = np.sqrt((d * d).sum(axis=1))
    u = d / length[:, None]
    stretch = length - rest
    vrel = ((vel[si] - vel[sj]) * u).sum(axis=1)
    f = -(k * stretch + kd * vrel)[:, None] * u
    forces = np.zeros_like(pos)
    np.add.at(forces, si, f)
    np.add.at(forces, sj, -f)
    energy = float(0.5 * (k * stretch * stretch).sum())
    return forces, energy


def spring_jacobian_blocks(pos, si, sj, rest, k, kd, clamp):
    """Per-spring 3x3 blocks ``dF_i/dx_i`` and ``dF_i/dv_i``."""
    d = pos[si] - pos[sj]
    length = np.sqrt((d * d).sum(axis=1))
    u = d / length[:, None]
    uu = u[:, :, None] * u[:, None, :]
    c = 1.0 - rest / length
    if clamp:
        c = np.maximum(c, 0.0)
    eye = np.eye(3)[None]
    kx = -k[:, None, None] * (uu + c[:, None, None] * (eye - uu))
    kv = -kd[:, None, None] * uu
    return kx, kv


def capsule_resolve(pos, vel, cap_a, cap_b, radius, eps, friction, max_passes):
    """Project particles out of capsules in place; returns the contact count."""
    contacts = 0
    for _ in range(max_passes):
        moved = 0
        for a, b, r in zip(cap_a, cap_b, radius):
            ab = b - a
            denom = ab @ ab
            t = np.clip(((pos - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(pos))
            c = a + t[:, None] * ab
            diff = pos - c
            dist = np.sqrt((diff * diff).sum(axis=1))
            hit = np.nonzero(dist - r < eps - 1e-12)[0]
            if hit.size == 0:
                continue
            n = np.empty((hit.size, 3))
            ok = dist[hit] > 1e-12
            n[ok] = diff[hit[ok]] / dist[hit[ok], None]
            if not np.all(ok):
                perp = np.cross(ab, [1.0, 0.0, 0.0])
                if perp @ perp < 1e-24:
                    perp = np.cross(ab, [0.0, 1.0, 0.0])
                if perp @ perp < 1e-24:
                    perp = np.array([0.0, 0.0, 1.0])
                n[~ok] = perp / np.sqrt(perp @ perp)
            pos[hit] = c[hit] + n * (r + eps)
            v = vel[hit]
            vn = (v * n).sum(axis=1)
            vel[hit] = (v - vn[:, None] * n) * (1.0 - friction)
            moved += hit.size
        contacts += moved
        if moved == 0:
            break
    return contacts


def rasterize(screen, depth, faces, zbuf, near):
    """Z-buffer triangles into ``zbuf`` (H x W, +inf background) in place.

    ``screen`` holds pixel coordinates, ``depth`` camera-space depth per
    vertex. Depth is interpolated perspective-correctly; pixel centers sit at
    ``(x + 0.5, y + 0.5)``.
    """
    H, W = zbuf.shape
    for f in faces:
        z = depth[f]
        if np.any(z <= near):
            continue
        p = screen[f]
        x0, y0 = p[0]
        x1, y1 = p[1]
        x2, y2 = p[2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = max(int(np.floor(p[:, 0].min() - 0.5)), 0)
        xmax = min(int(np.ceil(p[:, 0].max() - 0.5)), W - 1)
        ymin = max(int(np.floor(p[:, 1].min() - 0.5)), 0)
        ymax = min(int(np.ceil(p[:, 1].max() - 0.5)), H - 1)
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1) + 0.5
        ys = np.arange(ymin, ymax + 1) + 0.5
        X, Y = np.meshgrid(xs, ys)
        w0 = ((x1 - X) * (y2 - Y) - (x2 - X) * (y1 - Y)) / area
        w1 = ((x2 - X) * (y0 - Y) - (x0 - X) * (y2 - Y)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        zi = 1.0 / (w0 / z[0] + w1 / z[1] + w2 / z[2])
        block = zbuf[ymin:ymax + 1, xmin:xmax + 1]
        take = inside & (zi < block)
        block[take] = zi[take]
