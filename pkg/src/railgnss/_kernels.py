"""Hot numeric kernels, each in a compiled (numba) and a vectorised numpy form.

The public names at the bottom of the module are bound to one of the two
implementations according to :data:`railgnss._accel.USE_NUMBA`. Both variants
stay importable (``NUMBA_KERNELS`` / ``NUMPY_KERNELS``) so tests and the
benchmark can compare them side by side.

Projection conventions shared by every variant:
  * the clamped foot point is exactly ``a`` for t <= 0 and exactly ``b`` for
    t >= 1, so a shared polyline vertex yields bit-identical distances for the
    two segments that meet there;
  * ties on distance go to the lowest segment id.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# numba variants
# --------------------------------------------------------------------------


@njit
def _project_one_nb(px, py, pz, a, b):
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dz = b[2] - a[2]
    l2 = dx * dx + dy * dy + dz * dz
    t = ((px - a[0]) * dx + (py - a[1]) * dy + (pz - a[2]) * dz) / l2
    if t <= 0.0:
        t = 0.0
        qx, qy, qz = a[0], a[1], a[2]
    elif t >= 1.0:
        t = 1.0
        qx, qy, qz = b[0], b[1], b[2]
    else:
        qx = a[0] + t * dx
        qy = a[1] + t * dy
        qz = a[2] + t * dz
    ex = px - qx
    ey = py - qy
    ez = pz - qz
    return t, np.sqrt(ex * ex + ey * ey + ez * ez)


@njit
def _scan_nb(point, starts, ends):
    best = -1
    best_t = 0.0
    best_d = np.inf
    for s in range(starts.shape[0]):
        t, d = _project_one_nb(point[0], point[1], point[2], starts[s], ends[s])
        if d < best_d:
            best = s
            best_t = t
            best_d = d
    return best, best_t, best_d


@njit
def _scan_many_nb(points, starts, ends):
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    ts = np.empty(n)
    ds = np.empty(n)
    for i in range(n):
        idx[i], ts[i], ds[i] = _scan_nb(points[i], starts, ends)
    return idx, ts, ds


@njit
def _grid_query_nb(point, radius, grid_origin, cell_size, dims, keys, offsets,
                   seg_ids, starts, ends):
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    for k in range(3):
        a = np.floor((point[k] - radius - grid_origin[k]) / cell_size)
        b = np.floor((point[k] + radius - grid_origin[k]) / cell_size)
        if b < 0 or a > dims[k] - 1:
            return -1, 0.0, np.inf
        lo[k] = max(int(a), 0)
        hi[k] = min(int(b), dims[k] - 1)
    best = -1
    best_t = 0.0
    best_d = np.inf
    nx = dims[0]
    ny = dims[1]
    for iz in range(lo[2], hi[2] + 1):
        for iy in range(lo[1], hi[1] + 1):
            for ix in range(lo[0], hi[0] + 1):
                key = ix + nx * (iy + ny * iz)
                pos = np.searchsorted(keys, key)
                if pos >= keys.shape[0] or keys[pos] != key:
                    continue
                for j in range(offsets[pos], offsets[pos + 1]):
                    s = seg_ids[j]
                    t, d = _project_one_nb(point[0], point[1], point[2],
                                           starts[s], ends[s])
                    if d > radius:
                        continue
                    if d < best_d or (d == best_d and s < best):
                        best = s
                        best_t = t
                        best_d = d
    return best, best_t, best_d


@njit
def _grid_query_many_nb(points, radius, grid_origin, cell_size, dims, keys,
                        offsets, seg_ids, starts, ends):
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    ts = np.empty(n)
    ds = np.empty(n)
    for i in range(n):
        idx[i], ts[i], ds[i] = _grid_query_nb(points[i], radius, grid_origin,
                                              cell_size, dims, keys, offsets,
                                              seg_ids, starts, ends)
    return idx, ts, ds


@njit
def _ranges_los_nb(p_r, sat_pos):
    n = sat_pos.shape[0]
    rng = np.empty(n)
    los = np.empty((n, 3))
    for i in range(n):
        dx = p_r[0] - sat_pos[i, 0]
        dy = p_r[1] - sat_pos[i, 1]
        dz = p_r[2] - sat_pos[i, 2]
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        rng[i] = r
        los[i, 0] = dx / r
        los[i, 1] = dy / r
        los[i, 2] = dz / r
    return rng, los


@njit
def _mix_nb(z_meas, r_meas, z_pred, r_pred):
    n = z_meas.shape[0]
    z = np.empty(n)
    r = np.empty(n)
    mu = np.empty(n)
    for i in range(n):
        wa = 1.0 / r_meas[i]
        wb = 1.0 / r_pred[i]
        mu_a = wa / (wa + wb)
        mu_b = 1.0 - mu_a
        zm = mu_a * z_meas[i] + mu_b * z_pred[i]
        da = z_meas[i] - zm
        db = z_pred[i] - zm
        z[i] = zm
        r[i] = mu_a * (r_meas[i] + da * da) + mu_b * (r_pred[i] + db * db)
        mu[i] = mu_a
    return z, r, mu


# --------------------------------------------------------------------------
# numpy variants
# --------------------------------------------------------------------------


def _project_np(point, starts, ends):
    """Clamped projection of ``point`` (one, or one per segment) onto each segment."""
    d = ends - starts
    l2 = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", point - starts, d) / l2
    q = starts + t[:, None] * d
    lo = t <= 0.0
    hi = t >= 1.0
    q[lo] = starts[lo]
    q[hi] = ends[hi]
    t = np.clip(t, 0.0, 1.0)
    e = point - q
    return t, np.sqrt(np.einsum("ij,ij->i", e, e))


def _scan_np(point, starts, ends):
    t, d = _project_np(point, starts, ends)
    s = int(np.argmin(d))
    return s, float(t[s]), float(d[s])


def _scan_many_np(points, starts, ends):
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    ts = np.empty(n)
    ds = np.empty(n)
    for i in range(n):
        idx[i], ts[i], ds[i] = _scan_np(points[i], starts, ends)
    return idx, ts, ds


def _grid_query_np(point, radius, grid_origin, cell_size, dims, keys, offsets,
                   seg_ids, starts, ends):
    a = np.floor((point - radius - grid_origin) / cell_size)
    b = np.floor((point + radius - grid_origin) / cell_size)
    if np.any(b < 0) or np.any(a > dims - 1):
        return -1, 0.0, np.inf
    lo = np.maximum(a.astype(np.int64), 0)
    hi = np.minimum(b.astype(np.int64), dims - 1)
    ix = np.arange(lo[0], hi[0] + 1)
    iy = np.arange(lo[1], hi[1] + 1)
    iz = np.arange(lo[2], hi[2] + 1)
    q = (ix[None, None, :] + dims[0] * (iy[None, :, None] + dims[1] * iz[:, None, None])).ravel()
    pos = np.searchsorted(keys, q)
    inside = pos < keys.shape[0]
    pos, q = pos[inside], q[inside]
    hit = pos[keys[pos] == q]
    if hit.size == 0:
        return -1, 0.0, np.inf
    first = offsets[hit]
    count = offsets[hit + 1] - first
    rel = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    cand = np.unique(seg_ids[np.repeat(first, count) + rel])
    t, d = _project_np(point, starts[cand], ends[cand])
    ok = d <= radius
    if not ok.any():
        return -1, 0.0, np.inf
    d = np.where(ok, d, np.inf)
    j = int(np.argmin(d))
    return int(cand[j]), float(t[j]), float(d[j])


def _grid_query_many_np(points, radius, grid_origin, cell_size, dims, keys,
                        offsets, seg_ids, starts, ends):
    n = points.shape[0]
    idx = np.full(n, -1, dtype=np.int64)
    ts = np.zeros(n)
    ds = np.full(n, np.inf)
    a = np.floor((points - radius - grid_origin) / cell_size)
    b = np.floor((points + radius - grid_origin) / cell_size)
    width = int((b - a).max(initial=0)) + 1
    if n == 0 or n * width**3 > 4_000_000:
        for i in range(n):
            idx[i], ts[i], ds[i] = _grid_query_np(points[i], radius, grid_origin,
                                                  cell_size, dims, keys, offsets,
                                                  seg_ids, starts, ends)
        return idx, ts, ds
    # every point scans a width^3 window of cells starting at its low corner
    w = np.arange(width)
    win = np.stack(np.meshgrid(w, w, w, indexing="ij"), axis=-1).reshape(-1, 3)
    cells = a.astype(np.int64)[:, None, :] + win[None, :, :]
    valid = np.all((cells >= 0) & (cells < dims) & (cells <= b.astype(np.int64)[:, None, :]), axis=2)
    owner = np.broadcast_to(np.arange(n)[:, None], valid.shape)[valid]
    c = cells[valid]
    q = c[:, 0] + dims[0] * (c[:, 1] + dims[1] * c[:, 2])
    pos = np.searchsorted(keys, q)
    inside = pos < keys.shape[0]
    pos, q, owner = pos[inside], q[inside], owner[inside]
    hit = keys[pos] == q
    pos, owner = pos[hit], owner[hit]
    first = offsets[pos]
    count = offsets[pos + 1] - first
    rel = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    seg = seg_ids[np.repeat(first, count) + rel]
    pair = np.unique(np.repeat(owner, count) * np.int64(starts.shape[0]) + seg)
    owner = pair // starts.shape[0]
    seg = pair % starts.shape[0]
    t, d = _project_np(points[owner], starts[seg], ends[seg])
    ok = d <= radius
    owner, seg, t, d = owner[ok], seg[ok], t[ok], d[ok]
    order = np.lexsort((seg, d, owner))
    owner, seg, t, d = owner[order], seg[order], t[order], d[order]
    best = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]]) if owner.size else owner
    idx[owner[best]] = seg[best]
    ts[owner[best]] = t[best]
    ds[owner[best]] = d[best]
    return idx, ts, ds


def _ranges_los_np(p_r, sat_pos):
    diff = p_r - sat_pos
    rng = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return rng, diff / rng[:, None]


def _mix_np(z_meas, r_meas, z_pred, r_pred):
    wa = 1.0 / r_meas
    wb = 1.0 / r_pred
    mu_a = wa / (wa + wb)
    mu_b = 1.0 - mu_a
    z = mu_a * z_meas + mu_b * z_pred
    r = mu_a * (r_meas + (z_meas - z) ** 2) + mu_b * (r_pred + (z_pred - z) ** 2)
    return z, r, mu_a


NUMBA_KERNELS = {
    "scan": _scan_nb,
    "scan_many": _scan_many_nb,
    "grid_query": _grid_query_nb,
    "grid_query_many": _grid_query_many_nb,
    "ranges_los": _ranges_los_nb,
    "mix": _mix_nb,
}

NUMPY_KERNELS = {
    "scan": _scan_np,
    "scan_many": _scan_many_np,
    "grid_query": _grid_query_np,
    "grid_query_many": _grid_query_many_np,
    "ranges_los": _ranges_los_np,
    "mix": _mix_np,
}

BACKEND = "numba" if USE_NUMBA else "numpy"
_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

scan = _active["scan"]
scan_many = _active["scan_many"]
grid_query = _active["grid_query"]
grid_query_many = _active["grid_query_many"]
ranges_los = _active["ranges_los"]
mix = _active["mix"]
