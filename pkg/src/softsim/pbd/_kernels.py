"""Numba kernels for the particle solver.

All loops are sequential and run in a fixed order so results are bit-identical
across runs and processes.  No prange, no fastmath.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "k_predict",
    "k_project_distance",
    "k_density_iterate",
    "k_self_collide",
    "k_collide",
    "k_velocity_commit",
    "k_neighbor_table",
]


@njit(cache=True)
def k_predict(pos, vel, inv_mass, dt, gx, gy, gz, pred):
    """Integrate gravity into velocities and predict positions.

    Returns 1 if any input or predicted value is non-finite, else 0.
    """
    n = pos.shape[0]
    bad = 0
    for i in range(n):
        vx = vel[i, 0]
        vy = vel[i, 1]
        vz = vel[i, 2]
        if inv_mass[i] > 0.0:
            vx += dt * gx
            vy += dt * gy
            vz += dt * gz
        vel[i, 0] = vx
        vel[i, 1] = vy
        vel[i, 2] = vz
        px = pos[i, 0] + dt * vx
        py = pos[i, 1] + dt * vy
        pz = pos[i, 2] + dt * vz
        pred[i, 0] = px
        pred[i, 1] = py
        pred[i, 2] = pz
        if not (math.isfinite(px) and math.isfinite(py) and math.isfinite(pz)):
            bad = 1
    return bad


@njit(cache=True)
def k_project_distance(pred, eff_w, di, dj, rest, stiffness):
    """One Gauss-Seidel sweep over the distance constraints, in storage order.

    Returns the number of degenerate (coincident endpoints) constraints seen.
    """
    degenerate = 0
    for c in range(di.shape[0]):
        i = di[c]
        j = dj[c]
        wi = eff_w[i]
        wj = eff_w[j]
        ws = wi + wj
        if ws <= 0.0:
            continue
        dx = pred[i, 0] - pred[j, 0]
        dy = pred[i, 1] - pred[j, 1]
        dz = pred[i, 2] - pred[j, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d < 1e-9:
            degenerate += 1
            continue
        corr = stiffness[c] * (d - rest[c]) / (ws * d)
        pred[i, 0] -= wi * corr * dx
        pred[i, 1] -= wi * corr * dy
        pred[i, 2] -= wi * corr * dz
        pred[j, 0] += wj * corr * dx
        pred[j, 1] += wj * corr * dy
        pred[j, 2] += wj * corr * dz
    return degenerate


@njit(cache=True)
def k_density_iterate(pred, eff_w, fl_idx, nb_idx, nb_cnt, h, rho0, eps, lam, dx, apply_dx):
    """One PBF density iteration over the fluid subset.

    Lambda pass then a Jacobi correction pass, both evaluated on the same
    positions; corrections land in dx and are added to pred when apply_dx.
    Density includes the particle's own kernel contribution; the constraint is
    one-sided (only compression is corrected).
    """
    nf = fl_idx.shape[0]
    h2 = h * h
    poly6 = 315.0 / (64.0 * math.pi * h**9)
    spiky = -45.0 / (math.pi * h**6)
    w_self = poly6 * h2 * h2 * h2
    inv_rho0 = 1.0 / rho0
    for f in range(nf):
        i = fl_idx[f]
        if eff_w[i] <= 0.0:
            lam[f] = 0.0
            continue
        xi = pred[i, 0]
        yi = pred[i, 1]
        zi = pred[i, 2]
        rho = w_self
        sgx = 0.0
        sgy = 0.0
        sgz = 0.0
        sg2 = 0.0
        for k in range(nb_cnt[f]):
            j = fl_idx[nb_idx[f, k]]
            ddx = xi - pred[j, 0]
            ddy = yi - pred[j, 1]
            ddz = zi - pred[j, 2]
            r2 = ddx * ddx + ddy * ddy + ddz * ddz
            if r2 >= h2:
                continue
            t = h2 - r2
            rho += poly6 * t * t * t
            r = math.sqrt(r2)
            if r > 1e-12:
                gm = spiky * (h - r) * (h - r) / r * inv_rho0
                gx = gm * ddx
                gy = gm * ddy
                gz = gm * ddz
                sgx += gx
                sgy += gy
                sgz += gz
                sg2 += gx * gx + gy * gy + gz * gz
        c = rho * inv_rho0 - 1.0
        if c <= 0.0:
            lam[f] = 0.0
        else:
            lam[f] = -c / (sgx * sgx + sgy * sgy + sgz * sgz + sg2 + eps)
    for f in range(nf):
        i = fl_idx[f]
        ax = 0.0
        ay = 0.0
        az = 0.0
        if eff_w[i] > 0.0:
            xi = pred[i, 0]
            yi = pred[i, 1]
            zi = pred[i, 2]
            li = lam[f]
            for k in range(nb_cnt[f]):
                g = nb_idx[f, k]
                j = fl_idx[g]
                ddx = xi - pred[j, 0]
                ddy = yi - pred[j, 1]
                ddz = zi - pred[j, 2]
                r2 = ddx * ddx + ddy * ddy + ddz * ddz
                if r2 >= h2:
                    continue
                r = math.sqrt(r2)
                if r <= 1e-12:
                    continue
                s = (li + lam[g]) * spiky * (h - r) * (h - r) / r * inv_rho0
                ax += s * ddx
                ay += s * ddy
                az += s * ddz
        dx[f, 0] = ax
        dx[f, 1] = ay
        dx[f, 2] = az
    if apply_dx:
        for f in range(nf):
            i = fl_idx[f]
            pred[i, 0] += dx[f, 0]
            pred[i, 1] += dx[f, 1]
            pred[i, 2] += dx[f, 2]


@njit(cache=True)
def k_self_collide(pred, eff_w, groups, sub_idx, tbl, cnt, min_dist):
    """Push same-group particle pairs closer than min_dist apart (mass weighted)."""
    md2 = min_dist * min_dist
    for a in range(sub_idx.shape[0]):
        i = sub_idx[a]
        gi = groups[i]
        for k in range(cnt[a]):
            b = tbl[a, k]
            if b <= a:
                continue  # visit each pair once
            j = sub_idx[b]
            if groups[j] != gi:
                continue
            wi = eff_w[i]
            wj = eff_w[j]
            ws = wi + wj
            if ws <= 0.0:
                continue
            ddx = pred[i, 0] - pred[j, 0]
            ddy = pred[i, 1] - pred[j, 1]
            ddz = pred[i, 2] - pred[j, 2]
            d2 = ddx * ddx + ddy * ddy + ddz * ddz
            if d2 >= md2 or d2 < 1e-24:
                continue
            d = math.sqrt(d2)
            corr = (d - min_dist) / (ws * d)  # negative: separates the pair
            pred[i, 0] -= wi * corr * ddx
            pred[i, 1] -= wi * corr * ddy
            pred[i, 2] -= wi * corr * ddz
            pred[j, 0] += wj * corr * ddx
            pred[j, 1] += wj * corr * ddy
            pred[j, 2] += wj * corr * ddz


@njit(cache=True)
def k_collide(
    pred,
    prev,
    eff_w,
    radius,
    dt,
    hs_n,
    hs_off,
    hs_fric,
    bc,
    bh,
    brot,
    bvel,
    bfric,
    acc,
    record,
    c_flag,
    c_n,
    c_v,
    c_fric,
):
    """Project dynamic particles out of half-spaces and oriented boxes.

    Clearance is `radius`.  On the final iteration (record != 0) contacts
    also apply positional friction against the tangential displacement
    accumulated this substep (pred vs prev, in the collider's moving frame):
    slides up to friction * total normal push are cancelled outright, larger
    ones are scaled down by that budget (Coulomb-style, once per substep).
    acc holds the per-particle normal push accumulated over the substep's
    iterations and must be zeroed by the caller once per substep.  When
    record != 0 the last contact per particle is also written to the contact
    arrays (used for friction at the velocity update).
    """
    n = pred.shape[0]
    nh = hs_off.shape[0]
    nb = bfric.shape[0]
    for i in range(n):
        if eff_w[i] <= 0.0:
            continue
        x = pred[i, 0]
        y = pred[i, 1]
        z = pred[i, 2]
        for hsi in range(nh):
            nx = hs_n[hsi, 0]
            ny = hs_n[hsi, 1]
            nz = hs_n[hsi, 2]
            phi = nx * x + ny * y + nz * z - hs_off[hsi]
            if phi < radius:
                push = radius - phi
                x += push * nx
                y += push * ny
                z += push * nz
                acc[i] += push
            # resting contact sits at phi == radius up to rounding, so the
            # contact tests below use a slightly inclusive band
            if record != 0 and phi < radius + 1e-9:
                budget = hs_fric[hsi] * acc[i]
                if budget > 0.0:
                    dxp = x - prev[i, 0]
                    dyp = y - prev[i, 1]
                    dzp = z - prev[i, 2]
                    dn = dxp * nx + dyp * ny + dzp * nz
                    tx = dxp - dn * nx
                    ty = dyp - dn * ny
                    tz = dzp - dn * nz
                    tl = math.sqrt(tx * tx + ty * ty + tz * tz)
                    if tl > 1e-12:
                        s = 1.0 if tl <= budget else budget / tl
                        x -= tx * s
                        y -= ty * s
                        z -= tz * s
                c_flag[i] = 1
                c_n[i, 0] = nx
                c_n[i, 1] = ny
                c_n[i, 2] = nz
                c_v[i, 0] = 0.0
                c_v[i, 1] = 0.0
                c_v[i, 2] = 0.0
                c_fric[i] = hs_fric[hsi]
        for b in range(nb):
            rx = x - bc[b, 0]
            ry = y - bc[b, 1]
            rz = z - bc[b, 2]
            # box frame: p = R^T r
            px = brot[b, 0, 0] * rx + brot[b, 1, 0] * ry + brot[b, 2, 0] * rz
            py = brot[b, 0, 1] * rx + brot[b, 1, 1] * ry + brot[b, 2, 1] * rz
            pz = brot[b, 0, 2] * rx + brot[b, 1, 2] * ry + brot[b, 2, 2] * rz
            hx = bh[b, 0]
            hy = bh[b, 1]
            hz = bh[b, 2]
            ax = abs(px)
            ay = abs(py)
            az = abs(pz)
            hit = False
            touch = False
            nlx = 0.0
            nly = 0.0
            nlz = 0.0
            if ax <= hx and ay <= hy and az <= hz:
                # inside (or on the surface): exit along the axis of minimum
                # penetration, ties broken in x, y, z order
                penx = hx - ax
                peny = hy - ay
                penz = hz - az
                if penx <= peny and penx <= penz:
                    s = 1.0 if px >= 0.0 else -1.0
                    px = s * (hx + radius)
                    nlx = s
                    acc[i] += penx + radius
                elif peny <= penz:
                    s = 1.0 if py >= 0.0 else -1.0
                    py = s * (hy + radius)
                    nly = s
                    acc[i] += peny + radius
                else:
                    s = 1.0 if pz >= 0.0 else -1.0
                    pz = s * (hz + radius)
                    nlz = s
                    acc[i] += penz + radius
                hit = True
                touch = True
            else:
                cx = min(max(px, -hx), hx)
                cy = min(max(py, -hy), hy)
                cz = min(max(pz, -hz), hz)
                ddx = px - cx
                ddy = py - cy
                ddz = pz - cz
                d2 = ddx * ddx + ddy * ddy + ddz * ddz
                rr = radius + 1e-9
                if d2 < rr * rr:
                    # resting contact sits at d == radius up to rounding
                    touch = True
                    d = math.sqrt(d2)
                    nlx = ddx / d
                    nly = ddy / d
                    nlz = ddz / d
                    if d2 < radius * radius:
                        s = radius / d
                        px = cx + ddx * s
                        py = cy + ddy * s
                        pz = cz + ddz * s
                        hit = True
                        acc[i] += radius - d
            if hit:
                x = bc[b, 0] + brot[b, 0, 0] * px + brot[b, 0, 1] * py + brot[b, 0, 2] * pz
                y = bc[b, 1] + brot[b, 1, 0] * px + brot[b, 1, 1] * py + brot[b, 1, 2] * pz
                z = bc[b, 2] + brot[b, 2, 0] * px + brot[b, 2, 1] * py + brot[b, 2, 2] * pz
            if touch and record != 0:
                wnx = brot[b, 0, 0] * nlx + brot[b, 0, 1] * nly + brot[b, 0, 2] * nlz
                wny = brot[b, 1, 0] * nlx + brot[b, 1, 1] * nly + brot[b, 1, 2] * nlz
                wnz = brot[b, 2, 0] * nlx + brot[b, 2, 1] * nly + brot[b, 2, 2] * nlz
                budget = bfric[b] * acc[i]
                if budget > 0.0:
                    # displacement relative to the moving collider
                    dxp = x - prev[i, 0] - bvel[b, 0] * dt
                    dyp = y - prev[i, 1] - bvel[b, 1] * dt
                    dzp = z - prev[i, 2] - bvel[b, 2] * dt
                    dn = dxp * wnx + dyp * wny + dzp * wnz
                    tx = dxp - dn * wnx
                    ty = dyp - dn * wny
                    tz = dzp - dn * wnz
                    tl = math.sqrt(tx * tx + ty * ty + tz * tz)
                    if tl > 1e-12:
                        s = 1.0 if tl <= budget else budget / tl
                        x -= tx * s
                        y -= ty * s
                        z -= tz * s
                c_flag[i] = 1
                c_n[i, 0] = wnx
                c_n[i, 1] = wny
                c_n[i, 2] = wnz
                c_v[i, 0] = bvel[b, 0]
                c_v[i, 1] = bvel[b, 1]
                c_v[i, 2] = bvel[b, 2]
                c_fric[i] = bfric[b]
        pred[i, 0] = x
        pred[i, 1] = y
        pred[i, 2] = z


@njit(cache=True)
def k_velocity_commit(pos, pred, vel, inv_mass, dt, c_flag, c_n, c_v, c_fric):
    """Derive velocities from the position change, apply contact friction, commit."""
    n = pos.shape[0]
    inv_dt = 1.0 / dt
    for i in range(n):
        if inv_mass[i] > 0.0:
            vx = (pred[i, 0] - pos[i, 0]) * inv_dt
            vy = (pred[i, 1] - pos[i, 1]) * inv_dt
            vz = (pred[i, 2] - pos[i, 2]) * inv_dt
            if c_flag[i] != 0:
                # damp the tangential part of the velocity relative to the
                # contacting collider; kill any remaining inward normal part
                rx = vx - c_v[i, 0]
                ry = vy - c_v[i, 1]
                rz = vz - c_v[i, 2]
                nx = c_n[i, 0]
                ny = c_n[i, 1]
                nz = c_n[i, 2]
                vn = rx * nx + ry * ny + rz * nz
                tx = rx - vn * nx
                ty = ry - vn * ny
                tz = rz - vn * nz
                if vn < 0.0:
                    vn = 0.0
                keep = 1.0 - c_fric[i]
                vx = c_v[i, 0] + vn * nx + tx * keep
                vy = c_v[i, 1] + vn * ny + ty * keep
                vz = c_v[i, 2] + vn * nz + tz * keep
            vel[i, 0] = vx
            vel[i, 1] = vy
            vel[i, 2] = vz
        pos[i, 0] = pred[i, 0]
        pos[i, 1] = pred[i, 1]
        pos[i, 2] = pred[i, 2]


@njit(cache=True)
def k_neighbor_table(points, radius, tbl, cnt):
    """Fill tbl (m, cap) with indices of points within `radius` (inclusive).

    Uniform grid with cell size = radius over the occupied bounding box;
    entries appear in deterministic grid-scan order.  Returns the largest
    neighbor count seen; if it exceeds cap the caller must retry with a wider
    table (rows are still safe, just truncated).
    """
    m = points.shape[0]
    cap = tbl.shape[1]
    if m == 0:
        return 0
    r2 = radius * radius
    minx = points[0, 0]
    miny = points[0, 1]
    minz = points[0, 2]
    maxx = minx
    maxy = miny
    maxz = minz
    for i in range(1, m):
        if points[i, 0] < minx:
            minx = points[i, 0]
        elif points[i, 0] > maxx:
            maxx = points[i, 0]
        if points[i, 1] < miny:
            miny = points[i, 1]
        elif points[i, 1] > maxy:
            maxy = points[i, 1]
        if points[i, 2] < minz:
            minz = points[i, 2]
        elif points[i, 2] > maxz:
            maxz = points[i, 2]
    nx = int((maxx - minx) / radius) + 1
    ny = int((maxy - miny) / radius) + 1
    nz = int((maxz - minz) / radius) + 1
    ncell = nx * ny * nz
    counts = np.zeros(ncell + 1, dtype=np.int64)
    cix = np.empty(m, dtype=np.int64)
    ciy = np.empty(m, dtype=np.int64)
    ciz = np.empty(m, dtype=np.int64)
    cid = np.empty(m, dtype=np.int64)
    for i in range(m):
        gx = int((points[i, 0] - minx) / radius)
        gy = int((points[i, 1] - miny) / radius)
        gz = int((points[i, 2] - minz) / radius)
        if gx >= nx:
            gx = nx - 1
        if gy >= ny:
            gy = ny - 1
        if gz >= nz:
            gz = nz - 1
        cix[i] = gx
        ciy[i] = gy
        ciz[i] = gz
        c = (gx * ny + gy) * nz + gz
        cid[i] = c
        counts[c + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    fill = counts[:ncell].copy()
    order = np.empty(m, dtype=np.int64)
    for i in range(m):
        c = cid[i]
        order[fill[c]] = i
        fill[c] += 1
    maxcnt = 0
    for i in range(m):
        xi = points[i, 0]
        yi = points[i, 1]
        zi = points[i, 2]
        k = 0
        for ox in range(-1, 2):
            gx = cix[i] + ox
            if gx < 0 or gx >= nx:
                continue
            for oy in range(-1, 2):
                gy = ciy[i] + oy
                if gy < 0 or gy >= ny:
                    continue
                for oz in range(-1, 2):
                    gz = ciz[i] + oz
                    if gz < 0 or gz >= nz:
                        continue
                    c = (gx * ny + gy) * nz + gz
                    for t in range(counts[c], counts[c + 1]):
                        j = order[t]
                        if j == i:
                            continue
                        ddx = xi - points[j, 0]
                        ddy = yi - points[j, 1]
                        ddz = zi - points[j, 2]
                        if ddx * ddx + ddy * ddy + ddz * ddz <= r2:
                            if k < cap:
                                tbl[i, k] = j
                            k += 1
        cnt[i] = k if k < cap else cap
        if k > maxcnt:
            maxcnt = k
    return maxcnt
