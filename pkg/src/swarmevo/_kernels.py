"""Compiled per-step kernels. Loop-level twins of the array code in world/agents.

All randomness arrives as pre-drawn arrays so results depend only on the
caller's numpy Generator.
"""
import math

import numpy as np
from numba import njit

CH = np.array([1, 6, 11])

# intent kinds / move directions (mirrors world.py)
IDLE, MOVE, COLLECT, SEND = 0, 1, 2, 3
TOWARD, AWAY, ORBIT = 0, 1, 2


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _crosses(px, py, qx, qy, w):
    o1 = _orient(px, py, qx, qy, w[0], w[1])
    o2 = _orient(px, py, qx, qy, w[2], w[3])
    o3 = _orient(w[0], w[1], w[2], w[3], px, py)
    o4 = _orient(w[0], w[1], w[2], w[3], qx, qy)
    return o1 * o2 < 0 and o3 * o4 < 0


@njit(cache=True)
def _nearest_on_wall(px, py, w):
    ax, ay = w[0], w[1]
    bx, by = w[2] - ax, w[3] - ay
    den = bx * bx + by * by
    t = 0.0
    if den > 1e-12:
        t = ((px - ax) * bx + (py - ay) * by) / den
        t = min(1.0, max(0.0, t))
    nx, ny = ax + t * bx, ay + t * by
    return nx, ny, math.hypot(px - nx, py - ny)


@njit(cache=True)
def geometry(pos, walls, pl0, d0, gamma, wall_loss, pl, dist):
    n = pos.shape[0]
    for i in range(n):
        pl[i, i] = pl0
        dist[i, i] = 0.0
        for j in range(i + 1, n):
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            v = pl0 + 10.0 * gamma * math.log10(max(d, d0) / d0)
            for k in range(walls.shape[0]):
                if _crosses(pos[i, 0], pos[i, 1], pos[j, 0], pos[j, 1], walls[k]):
                    v += wall_loss
            pl[i, j] = v
            pl[j, i] = v
            dist[i, j] = d
            dist[j, i] = d


@njit(cache=True)
def jam_mw(node, channel, n, jammed, tx_power, pl, xs):
    out = 0.0
    for j in range(jammed.shape[0]):
        if jammed[j] == channel:
            jn = n + 2 + j
            out += 10.0 ** ((tx_power - pl[jn, node] - xs[jn, node]) / 10.0)
    return out


@njit(cache=True)
def perceive(n, t, pos, held, pl, dist, xs, jammed, tx_power, noise_mw, snir_thr,
             known_pos, known_t, k_period, walls, lidar_range, d_th, net_range,
             channel, noise_db, p_rs, rhs_col, lhs_col, op, eq_tol, n_atoms, dist_start):
    src, snk = n, n + 1
    nb = np.zeros((n, n + 2), dtype=np.bool_)
    for i in range(n):
        interf = noise_mw + jam_mw(i, 1, n, jammed, tx_power, pl, xs)
        floor_db = 10.0 * math.log10(interf)
        for j in range(n + 2):
            if j != i and tx_power - pl[j, i] - xs[j, i] - floor_db >= snir_thr:
                nb[i, j] = True

    for i in range(n):
        for j in range(n):
            if nb[i, j]:
                known_pos[i, j, 0] = pos[j, 0]
                known_pos[i, j, 1] = pos[j, 1]
                known_t[i, j] = t
    if k_period > 0 and t % k_period == 0:
        snap_t = known_t.copy()
        snap_p = known_pos.copy()
        for i in range(n):
            for j in range(n):
                if not nb[i, j]:
                    continue
                for k in range(n):
                    if snap_t[j, k] > known_t[i, k]:
                        known_t[i, k] = snap_t[j, k]
                        known_pos[i, k, 0] = snap_p[j, k, 0]
                        known_pos[i, k, 1] = snap_p[j, k, 1]

    values = np.full((n, 8), np.nan)
    sel = np.full((n, 3), -1)
    for i in range(n):
        best_c = np.inf
        for col in range(2):
            anchor = src if col == 0 else snk
            ux = pos[anchor, 0] - pos[i, 0]
            uy = pos[anchor, 1] - pos[i, 1]
            un = math.hypot(ux, uy)
            if un <= 1e-9:
                continue
            best = -1
            best_cos = 0.0
            for j in range(n + 2):
                if not nb[i, j]:
                    continue
                vx = pos[j, 0] - pos[i, 0]
                vy = pos[j, 1] - pos[i, 1]
                cos = (vx * ux + vy * uy) / max(dist[i, j] * un, 1e-12)
                if cos > best_cos:
                    best_cos = cos
                    best = j
            if best >= 0:
                sel[i, col] = best
                values[i, col] = dist[i, best]
        for j in range(n + 2):
            if nb[i, j] and dist[i, j] < best_c:
                best_c = dist[i, j]
                sel[i, 2] = j
        if sel[i, 2] >= 0:
            values[i, 2] = best_c
        values[i, 3] = dist[i, snk]
        values[i, 4] = dist[i, src]
        values[i, 5] = d_th
        values[i, 6] = net_range
        ci = 0 if channel[i] == 1 else (1 if channel[i] == 6 else 2)
        values[i, 7] = noise_db[i, ci]

    vclose = np.zeros((n, 2))
    vclose_ok = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        best = np.inf
        for k in range(n):
            if k == i or known_t[i, k] < 0:
                continue
            d = math.hypot(known_pos[i, k, 0] - pos[i, 0], known_pos[i, k, 1] - pos[i, 1])
            if d < best:
                best = d
                vclose[i, 0] = known_pos[i, k, 0]
                vclose[i, 1] = known_pos[i, k, 1]
                vclose_ok[i] = True

    obst = np.zeros((n, 2))
    obst_ok = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        best = np.inf
        for k in range(walls.shape[0]):
            nx, ny, d = _nearest_on_wall(pos[i, 0], pos[i, 1], walls[k])
            if d < best:
                best = d
                obst[i, 0] = nx
                obst[i, 1] = ny
        obst_ok[i] = best <= lidar_range

    atoms = np.zeros((n, n_atoms), dtype=np.bool_)
    net_node = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        net_node[i] = nb[i, src] or nb[i, snk]
        atoms[i, 0] = values[i, 7] <= p_rs
        for c in range(3):
            atoms[i, 1 + c] = noise_db[i, c] <= p_rs
        atoms[i, 4] = held[i] >= 0
        atoms[i, 5] = held[i] < 0
        atoms[i, 6] = net_node[i]
        atoms[i, 7] = not net_node[i]
        for a in range(rhs_col.shape[0]):
            r = values[i, rhs_col[a]]
            l = values[i, lhs_col[a]]
            if np.isnan(r) or np.isnan(l):
                continue
            if op[a] == 0:
                atoms[i, dist_start + a] = r < l
            elif op[a] == 1:
                atoms[i, dist_start + a] = r > l
            else:
                atoms[i, dist_start + a] = abs(r - l) <= eq_tol
    return nb, values, sel, vclose, vclose_ok, obst, obst_ok, net_node, atoms


@njit(cache=True)
def select_rules(atoms, rule_atoms, rule_natoms, q, action_ids, pending, pending_rho,
                 alpha_q, beta_q, alpha_grasp, u):
    """Shortlist, deferred Q update, GRASP pick and matched-action set for every agent."""
    n, R = q.shape
    sl = np.zeros((n, R), dtype=np.bool_)
    matched = np.zeros((n, R), dtype=np.bool_)
    selected = np.full(n, -1)
    aid = np.full(n, -1)
    for i in range(n):
        any_sl = False
        for r in range(R):
            ok = True
            for k in range(rule_natoms[i, r]):
                if not atoms[i, rule_atoms[i, r, k]]:
                    ok = False
                    break
            sl[i, r] = ok
            any_sl = any_sl or ok
        qmax = -np.inf
        qmin = np.inf
        for r in range(R):
            if sl[i, r]:
                qmax = max(qmax, q[i, r])
                qmin = min(qmin, q[i, r])
        max_next = qmax if any_sl else 0.0
        upd = False
        for r in range(R):
            if pending[i, r]:
                q[i, r] = q[i, r] * (1.0 - alpha_q) + alpha_q * (pending_rho[i] + beta_q * max_next)
                pending[i, r] = False
                upd = True
        if not any_sl:
            continue
        if upd:
            qmax = -np.inf
            qmin = np.inf
            for r in range(R):
                if sl[i, r]:
                    qmax = max(qmax, q[i, r])
                    qmin = min(qmin, q[i, r])
        thr = (1.0 - alpha_grasp) * qmax + alpha_grasp * qmin
        count = 0
        for r in range(R):
            if sl[i, r] and q[i, r] >= thr:
                count += 1
        pick = min(int(u[i] * count), count - 1)
        for r in range(R):
            if sl[i, r] and q[i, r] >= thr:
                if pick == 0:
                    selected[i] = r
                    break
                pick -= 1
        aid[i] = action_ids[i, selected[i]]
        for r in range(R):
            matched[i, r] = sl[i, r] and action_ids[i, r] == aid[i]
    return sl, matched, selected, aid


@njit(cache=True)
def build_intents(n, aid, pos, sel, nb, vclose, vclose_ok, obst, obst_ok,
                  act_kind, act_dir, act_target, act_channel, act_power):
    """Translate chosen action ids into movement targets and radio destinations."""
    src, snk = n, n + 1
    kind = np.zeros(n, dtype=np.int8)
    direction = np.zeros(n, dtype=np.int8)
    tpos = np.zeros((n, 2))
    tok = np.zeros(n, dtype=np.bool_)
    dest = np.full(n, -1)
    channel = np.ones(n, dtype=np.int64)
    power = np.full(n, 100, dtype=np.int64)
    for i in range(n):
        a = aid[i]
        if a < 0:
            continue
        kind[i] = act_kind[a]
        direction[i] = act_dir[a]
        channel[i] = act_channel[a]
        power[i] = act_power[a]
        tg = act_target[a]
        node = -1
        if tg < 3:
            node = sel[i, tg]
        elif tg == 3:
            node = src
        elif tg == 4:
            node = snk
        if kind[i] == MOVE:
            if node >= 0:
                tpos[i, 0] = pos[node, 0]
                tpos[i, 1] = pos[node, 1]
                tok[i] = True
            elif tg == 5:
                tpos[i, 0] = vclose[i, 0]
                tpos[i, 1] = vclose[i, 1]
                tok[i] = vclose_ok[i]
            elif tg == 6:
                tpos[i, 0] = obst[i, 0]
                tpos[i, 1] = obst[i, 1]
                tok[i] = obst_ok[i]
        elif kind[i] == SEND:
            if node >= 0 and nb[i, node]:
                dest[i] = node
        elif kind[i] == COLLECT:
            if nb[i, src]:
                dest[i] = src
    return kind, direction, tpos, tok, dest, channel, power


@njit(cache=True)
def learn(kind, delta_packet, interacted, delta_source, cost_move, cost_comm,
          matched, q, error, strength, uses, hist, head, trace, lam, alpha_q):
    """Reward, error update and truncated eligibility-trace strength update.

    ``hist`` is a ring of the last ``depth`` matched sets; slot ``head`` holds
    the oldest one and is overwritten with ``matched``. ``trace`` carries
    sum_d lam**d * matched[t - d] for d < depth and is updated incrementally.
    """
    n, R = q.shape
    depth = hist.shape[0]
    lam_d = lam ** depth
    rho = np.zeros(n)
    for i in range(n):
        if kind[i] == IDLE:
            continue
        cost = cost_move if kind[i] == MOVE else cost_comm
        dp = delta_packet[i]
        sgn = 1.0 if dp > 0 else (-1.0 if dp < 0 else 0.0)
        rs = 0.0 if interacted[i] else delta_source[i]
        rho[i] = math.log10(abs(dp) + 1.0) * sgn + rs - cost
    for i in range(n):
        x = rho[i]
        sgn = 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)
        g = math.log10(abs(x) + 1.0) * sgn
        for r in range(R):
            tr = lam * trace[i, r]
            if matched[i, r]:
                tr += 1.0
            if hist[head, i, r]:
                tr -= lam_d
            trace[i, r] = tr
            hist[head, i, r] = matched[i, r]
            if matched[i, r]:
                error[i, r] = error[i, r] * (1.0 - alpha_q) + alpha_q * abs(rho[i] - q[i, r])
                uses[i, r] += 1
            if g != 0.0:
                strength[i, r] += g * tr
    return rho


@njit(cache=True)
def move(n, pos, kind, direction, target_pos, target_ok, speed, walls, clearance, bounds):
    for i in range(n):
        if kind[i] != MOVE or not target_ok[i]:
            continue
        px, py = pos[i, 0], pos[i, 1]
        vx = target_pos[i, 0] - px
        vy = target_pos[i, 1] - py
        r = math.hypot(vx, vy)
        if r <= 1e-9:
            continue
        ux, uy = vx / r, vy / r
        if direction[i] == TOWARD:
            s = min(speed, r)
            sx, sy = ux * s, uy * s
        elif direction[i] == AWAY:
            sx, sy = -ux * speed, -uy * speed
        else:
            th = speed / r
            c, s_ = math.cos(th), math.sin(th)
            rx, ry = -vx, -vy
            nx = target_pos[i, 0] + c * rx - s_ * ry
            ny = target_pos[i, 1] + s_ * rx + c * ry
            sx, sy = nx - px, ny - py
        cx, cy = px + sx, py + sy
        if walls.shape[0] > 0:
            blocked = False
            for k in range(walls.shape[0]):
                if _nearest_on_wall(cx, cy, walls[k])[2] < clearance:
                    blocked = True
                    break
            if blocked:
                best = np.inf
                bx = by = 0.0
                for k in range(walls.shape[0]):
                    wx, wy, d = _nearest_on_wall(px, py, walls[k])
                    if d < best:
                        best, bx, by = d, wx, wy
                nx, ny = px - bx, py - by
                nn = max(math.hypot(nx, ny), 1e-12)
                nx, ny = nx / nn, ny / nn
                into = sx * nx + sy * ny
                if into < 0:
                    sx -= into * nx
                    sy -= into * ny
                cx, cy = px + sx, py + sy
                for k in range(walls.shape[0]):
                    if _nearest_on_wall(cx, cy, walls[k])[2] < clearance:
                        cx, cy = px, py
                        break
        pos[i, 0] = min(max(cx, bounds[0]), bounds[1])
        pos[i, 1] = min(max(cy, bounds[2]), bounds[3])


@njit(cache=True)
def communicate(n, kind, dest, channel_req, power_dbm, held, stack, top, touched,
                contributions, delivered, channel, jammed, pl, xs, tx_power, noise_mw,
                snir_thr, detection_floor, noise_db):
    """Jammer scan, SNIR resolution and custody transfer for one step.

    Returns (top, delivered, transmitted, success, received, transfers, n_transfers).
    ``transfers`` rows are (from node, to node, packet id).
    """
    src, snk = n, n + 1
    # active transmissions
    tx = np.zeros(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if kind[i] == SEND and held[i] >= 0 and dest[i] >= 0:
            tx[m] = i
            m += 1
        elif kind[i] == COLLECT and held[i] < 0 and dest[i] == src and top > 0:
            tx[m] = i
            m += 1
    transmitted = np.zeros(n, dtype=np.bool_)
    success = np.zeros(n, dtype=np.bool_)
    received = np.zeros(n, dtype=np.bool_)
    transfers = np.zeros((2 * n + 1, 3), dtype=np.int64)
    nt = 0
    for k in range(m):
        a = tx[k]
        transmitted[a] = True
        channel[a] = channel_req[a]

    # jammers lock on to the lowest detected active channel
    for j in range(jammed.shape[0]):
        jn = n + 2 + j
        best = 0
        for k in range(m):
            a = tx[k]
            if power_dbm[a] - pl[a, jn] - xs[a, jn] >= detection_floor:
                c = channel[a]
                if best == 0 or c < best:
                    best = c
        jammed[j] = best

    ok = np.zeros(m, dtype=np.bool_)
    for k in range(m):
        a = tx[k]
        c = channel[a]
        rx = dest[a]
        if rx < n and transmitted[rx]:
            continue
        sig = power_dbm[a] - pl[a, rx] - xs[a, rx]
        interf = noise_mw + jam_mw(rx, c, n, jammed, tx_power, pl, xs)
        for k2 in range(m):
            b = tx[k2]
            if k2 != k and channel[b] == c:
                interf += 10.0 ** ((power_dbm[b] - pl[b, rx] - xs[b, rx]) / 10.0)
        good = sig - 10.0 * math.log10(interf) >= snir_thr
        if good and kind[a] == COLLECT:
            resp = tx_power - pl[src, a] - xs[src, a]
            interf = noise_mw + jam_mw(a, c, n, jammed, tx_power, pl, xs)
            for k2 in range(m):
                b = tx[k2]
                if k2 != k and channel[b] == c:
                    interf += 10.0 ** ((power_dbm[b] - pl[b, a] - xs[b, a]) / 10.0)
            good = resp - 10.0 * math.log10(interf) >= snir_thr
        ok[k] = good

    # interference each agent measured this step, per channel, excluding its own signal
    interference = np.zeros((n, 3))
    for k in range(m):
        a = tx[k]
        ci = 0 if channel[a] == 1 else (1 if channel[a] == 6 else 2)
        for i in range(n):
            if i != a:
                interference[i, ci] += 10.0 ** ((power_dbm[a] - pl[a, i] - xs[a, i]) / 10.0)
        if kind[a] == COLLECT and ok[k]:
            for i in range(n):
                if i != a:
                    interference[i, ci] += 10.0 ** ((tx_power - pl[src, i] - xs[src, i]) / 10.0)
    for i in range(n):
        for ci in range(3):
            interference[i, ci] += jam_mw(i, CH[ci], n, jammed, tx_power, pl, xs)
            noise_db[i, ci] = 10.0 * math.log10(1.0 + interference[i, ci] / noise_mw)

    taken = np.zeros(n, dtype=np.bool_)
    for k in range(m):
        if not ok[k]:
            continue
        a = tx[k]
        if kind[a] == COLLECT:
            if top == 0:
                continue
            top -= 1
            pid = stack[top]
            held[a] = pid
            touched[pid, a] = True
            received[a] = True
            transfers[nt, 0] = src
            transfers[nt, 1] = a
            transfers[nt, 2] = pid
            nt += 1
            success[a] = True
            continue
        rx = dest[a]
        pid = held[a]
        if rx < n:
            if held[rx] >= 0 or taken[rx]:
                continue
            held[a] = -1
            held[rx] = pid
            touched[pid, rx] = True
            taken[rx] = True
            received[rx] = True
        elif rx == snk:
            held[a] = -1
            delivered += 1
            for i in range(n):
                if touched[pid, i]:
                    contributions[i] += 1
        else:
            held[a] = -1
            stack[top] = pid
            top += 1
        transfers[nt, 0] = a
        transfers[nt, 1] = rx
        transfers[nt, 2] = pid
        nt += 1
        success[a] = True
    return top, delivered, transmitted, success, received, transfers, nt
