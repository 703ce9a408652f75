# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contracts as ``_pykernels``."""
import numpy as np
from libc.math cimport sqrt, floor, ceil


def spring_forces(const double[:, ::1] pos, const double[:, ::1] vel, const long[::1] si,
                  const long[::1] sj, const double[::1] rest, const double[::1] k,
                  const double[::1] kd):
    cdef Py_ssize_t n = pos.shape[0], m = si.shape[0], s, a
    forces_arr = np.zeros((n, 3))
    cdef double[:, ::1] F = forces_arr
    cdef double d[3]
    cdef double length, stretch, vrel, mag, energy = 0.0
    cdef long i, j
    for s in range(m):
        i = si[s]
        j = sj[s]
        for a in range(3):
            d[a] = pos[i, a] - pos[j, a]
        length = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        for a in range(3):
            d[a] = d[a] / length
        stretch = length - rest[s]
        vrel = 0.0
        for a in range(3):
            vrel = vrel + (vel[i, a] - vel[j, a]) * d[a]
        mag = -(k[s] * stretch + kd[s] * vrel)
        for a in range(3):
            F[i, a] += mag * d[a]
            F[j, a] -= mag * d[a]
        energy += 0.5 * (k[s] * stretch * stretch)
    return forces_arr, energy


def spring_jacobian_blocks(const double[:, ::1] pos, const long[::1] si, const long[::1] sj,
                           const double[::1] rest, const double[::1] k, const double[::1] kd,
                           bint clamp):
    cdef Py_ssize_t m = si.shape[0], s, a, b
    kx_arr = np.empty((m, 3, 3))
    kv_arr = np.empty((m, 3, 3))
    cdef double[:, :, ::1] KX = kx_arr
    cdef double[:, :, ::1] KV = kv_arr
    cdef double d[3]
    cdef double length, c, uu, eye
    cdef long i, j
    for s in range(m):
        i = si[s]
        j = sj[s]
        for a in range(3):
            d[a] = pos[i, a] - pos[j, a]
        length = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        for a in range(3):
            d[a] = d[a] / length
        c = 1.0 - rest[s] / length
        if clamp and c < 0.0:
            c = 0.0
        for a in range(3):
            for b in range(3):
                uu = d[a] * d[b]
                eye = 1.0 if a == b else 0.0
                KX[s, a, b] = -k[s] * (uu + c * (eye - uu))
                KV[s, a, b] = -kd[s] * uu
    return kx_arr, kv_arr


def capsule_resolve(double[:, ::1] pos, double[:, ::1] vel, const double[:, ::1] cap_a,
                    const double[:, ::1] cap_b, const double[::1] radius, double eps, double friction,
                    int max_passes):
    cdef Py_ssize_t n = pos.shape[0], nc = cap_a.shape[0], p, q, a
    cdef int it, moved, contacts = 0
    cdef double ab[3]
    cdef double c[3]
    cdef double diff[3]
    cdef double nrm[3]
    cdef double perp[3]
    cdef double denom, t, dist, vn, pp
    for it in range(max_passes):
        moved = 0
        for q in range(nc):
            denom = 0.0
            for a in range(3):
                ab[a] = cap_b[q, a] - cap_a[q, a]
                denom = denom + ab[a] * ab[a]
            for p in range(n):
                t = 0.0
                if denom > 0:
                    for a in range(3):
                        t = t + (pos[p, a] - cap_a[q, a]) * ab[a]
                    t = t / denom
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                dist = 0.0
                for a in range(3):
                    c[a] = cap_a[q, a] + t * ab[a]
                    diff[a] = pos[p, a] - c[a]
                    dist = dist + diff[a] * diff[a]
                dist = sqrt(dist)
                if not (dist - radius[q] < eps - 1e-12):
                    continue
                if dist > 1e-12:
                    for a in range(3):
                        nrm[a] = diff[a] / dist
                else:
                    # cross(ab, e_x), then e_y, then e_z
                    perp[0] = 0.0
                    perp[1] = ab[2]
                    perp[2] = -ab[1]
                    pp = perp[1] * perp[1] + perp[2] * perp[2]
                    if pp < 1e-24:
                        perp[0] = -ab[2]
                        perp[1] = 0.0
                        perp[2] = ab[0]
                        pp = perp[0] * perp[0] + perp[2] * perp[2]
                    if pp < 1e-24:
                        perp[0] = 0.0
                        perp[1] = 0.0
                        perp[2] = 1.0
                        pp = 1.0
                    pp = sqrt(pp)
                    for a in range(3):
                        nrm[a] = perp[a] / pp
                vn = 0.0
                for a in range(3):
                    pos[p, a] = c[a] + nrm[a] * (radius[q] + eps)
                    vn = vn + vel[p, a] * nrm[a]
                for a in range(3):
                    vel[p, a] = (vel[p, a] - vn * nrm[a]) * (1.0 - friction)
                moved += 1
        contacts += moved
        if moved == 0:
            break
    return contacts


def rasterize(const double[:, ::1] screen, const double[::1] depth, const long[:, ::1] faces,
              double[:, ::1] zbuf, double near):
    cdef Py_ssize_t H = zbuf.shape[0], W = zbuf.shape[1], nf = faces.shape[0], f
    cdef long i0, i1, i2, x, y, xmin, xmax, ymin, ymax
    cdef double x0, y0, x1, y1, x2, y2, z0, z1, z2, area, X, Y, w0, w1, w2, zi
    cdef double lo, hi
    for f in range(nf):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        z0 = depth[i0]
        z1 = depth[i1]
        z2 = depth[i2]
        if z0 <= near or z1 <= near or z2 <= near:
            continue
        x0 = screen[i0, 0]
        y0 = screen[i0, 1]
        x1 = screen[i1, 0]
        y1 = screen[i1, 1]
        x2 = screen[i2, 0]
        y2 = screen[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        lo = min(x0, min(x1, x2))
        hi = max(x0, max(x1, x2))
        xmin = max(<long>floor(lo - 0.5), 0)
        xmax = min(<long>ceil(hi - 0.5), W - 1)
        lo = min(y0, min(y1, y2))
        hi = max(y0, max(y1, y2))
        ymin = max(<long>floor(lo - 0.5), 0)
        ymax = min(<long>ceil(hi - 0.5), H - 1)
        for y in range(ymin, ymax + 1):
            Y = y + 0.5
            for x in range(xmin, xmax + 1):
                X = x + 0.5
                w0 = ((x1 - X) * (y2 - Y) - (x2 - X) * (y1 - Y)) / area
                w1 = ((x2 - X) * (y0 - Y) - (x0 - X) * (y2 - Y)) / area
                w2 = 1.0 - w0 - w1
                if w0 < 0 or w1 < 0 or w2 < 0:
                    continue
                zi = 1.0 / (w0 / z0 + w1 / z1 + w2 / z2)
                if zi < zbuf[y, x]:
                    zbuf[y, x] = zi
