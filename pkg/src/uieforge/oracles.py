"""Slow, loop-based reference evaluations.

Each function recomputes a quantity pixel by pixel with the ``math`` module
and plain Python lists, sharing no code with the vectorised implementations
it is used to check.  Inputs are nested lists or numpy arrays laid out
``(3, H, W)`` with values in [0, 1].
"""
from __future__ import annotations

import math

_M = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)


def _lin(c: float) -> float:
    return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4


def _f(t: float) -> float:
    d = 6 / 29
    return t ** (1 / 3) if t > d**3 else t / (3 * d * d) + 4 / 29


def lab_pixel(r: float, g: float, b: float) -> tuple[float, float, float]:
    rgb = [_lin(min(max(v, 0.0), 1.0)) for v in (r, g, b)]
    xyz = [sum(m * c for m, c in zip(row, rgb)) for row in _M]
    white = [sum(row) for row in _M]
    fx, fy, fz = (_f(v / w) for v, w in zip(xyz, white))
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def lch_pixel(r: float, g: float, b: float) -> tuple[float, float, float]:
    L, A, B = lab_pixel(r, g, b)
    C = math.sqrt(A * A + B * B)
    H = 0.0 if C == 0 else math.atan2(B, A)
    if H <= -math.pi:
        H += 2 * math.pi
    return L, C, H


def _quantize(v: float, lo: float, hi: float, bins: int) -> list[float]:
    v = min(max(v, lo), hi)
    width = (hi - lo) / (bins - 1)
    return [max(0.0, 1.0 - abs(v - (lo + k * width)) / width) for k in range(bins)]


def _xent(target: float, pred: float, lo: float, hi: float, bins: int) -> float:
    qt, qp = _quantize(target, lo, hi, bins), _quantize(pred, lo, hi, bins)
    return -sum(t * math.log(max(p, 1e-8)) for t, p in zip(qt, qp))


def _pixels(img):
    h, w = len(img[0]), len(img[0][0])
    for y in range(h):
        for x in range(w):
            yield float(img[0][y][x]), float(img[1][y][x]), float(img[2][y][x])


def loss_lab(gen, ref, bins: int = 256) -> float:
    terms = []
    for pg, pr in zip(_pixels(gen), _pixels(ref)):
        Lg, Ag, Bg = lab_pixel(*pg)
        Ly, Ay, By = lab_pixel(*pr)
        terms.append((Ly - Lg) ** 2 + _xent(Ay, Ag, -128, 127, bins) + _xent(By, Bg, -128, 127, bins))
    return sum(terms) / len(terms)


def loss_lch(gen, ref, bins: int = 256) -> float:
    terms = []
    for pg, pr in zip(_pixels(gen), _pixels(ref)):
        Lg, Cg, Hg = lch_pixel(*pg)
        Ly, Cy, Hy = lch_pixel(*pr)
        dh = Hy - Hg
        while dh > math.pi:
            dh -= 2 * math.pi
        while dh <= -math.pi:
            dh += 2 * math.pi
        terms.append(_xent(Ly, Lg, 0, 100, bins) + (Cy - Cg) ** 2 + dh * dh)
    return sum(terms) / len(terms)


def _log_sigmoid(x: float) -> float:
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def loss_gan(real, fake) -> tuple[float, float]:
    real, fake = list(real), list(fake)
    d = -sum(_log_sigmoid(v) for v in real) / len(real) - sum(_log_sigmoid(-v) for v in fake) / len(fake)
    g = -sum(_log_sigmoid(v) for v in fake) / len(fake)
    return d, g


def _gray(img):
    h, w = len(img[0]), len(img[0][0])
    return [[0.299 * img[0][y][x] + 0.587 * img[1][y][x] + 0.114 * img[2][y][x] for x in range(w)] for y in range(h)]


def ssim(a, b, size: int = 11, sigma: float = 1.5) -> float:
    ga, gb = _gray(a), _gray(b)
    h, w = len(ga), len(ga[0])
    half = (size - 1) / 2
    raw = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma)) for j in range(size)] for i in range(size)]
    norm = sum(map(sum, raw))
    win = [[v / norm for v in row] for row in raw]
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            mx = sum(win[i][j] * ga[y + i][x + j] for i in range(size) for j in range(size))
            my = sum(win[i][j] * gb[y + i][x + j] for i in range(size) for j in range(size))
            vx = sum(win[i][j] * (ga[y + i][x + j] - mx) ** 2 for i in range(size) for j in range(size))
            vy = sum(win[i][j] * (gb[y + i][x + j] - my) ** 2 for i in range(size) for j in range(size))
            cxy = sum(
                win[i][j] * (ga[y + i][x + j] - mx) * (gb[y + i][x + j] - my) for i in range(size) for j in range(size)
            )
            scores.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# UIQM


def _trimmed(values, a1=0.1, a2=0.1):
    v = sorted(values)
    n = len(v)
    v = v[int(a1 * n) : n - int(a2 * n)]
    mu = sum(v) / len(v)
    return mu, sum((x - mu) ** 2 for x in v) / len(v)


def _reflect(i: int, n: int) -> int:
    # half-sample symmetric boundary: d c b a | a b c d
    if i < 0:
        return -i - 1
    if i >= n:
        return 2 * n - i - 1
    return i


def _sobel(ch):
    h, w = len(ch), len(ch[0])
    at = lambda y, x: ch[_reflect(y, h)][_reflect(x, w)]  # noqa: E731
    out = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) - (
                at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1)
            )
            gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) - (
                at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1)
            )
            out[y][x] = math.sqrt(((gx / 4) ** 2 + (gy / 4) ** 2) / 2)
    return out


def _block_extrema(ch, size):
    h, w = len(ch), len(ch[0])
    ny, nx = math.ceil(h / size), math.ceil(w / size)
    for i in range(ny):
        y1 = h if i == ny - 1 else (i + 1) * size
        for j in range(nx):
            x1 = w if j == nx - 1 else (j + 1) * size
            vals = [ch[y][x] for y in range(i * size, y1) for x in range(j * size, x1)]
            yield min(vals), max(vals)


def uiqm(img) -> float:
    h, w = len(img[0]), len(img[0][0])
    R = [[255.0 * img[0][y][x] for x in range(w)] for y in range(h)]
    G = [[255.0 * img[1][y][x] for x in range(w)] for y in range(h)]
    B = [[255.0 * img[2][y][x] for x in range(w)] for y in range(h)]
    rg = [R[y][x] - G[y][x] for y in range(h) for x in range(w)]
    yb = [(R[y][x] + G[y][x]) / 2 - B[y][x] for y in range(h) for x in range(w)]
    mrg, vrg = _trimmed(rg)
    myb, vyb = _trimmed(yb)
    uicm = -0.0268 * math.sqrt(mrg**2 + myb**2) + 0.1586 * math.sqrt(vrg + vyb)

    uism = 0.0
    for weight, c in zip((0.299, 0.587, 0.114), range(3)):
        ch = [[float(img[c][y][x]) for x in range(w)] for y in range(h)]
        mag = _sobel(ch)
        edges = [[min(255.0, max(0.0, float(round(255.0 * ch[y][x] * mag[y][x])))) for x in range(w)] for y in range(h)]
        blocks = list(_block_extrema(edges, 8))
        uism += weight * sum((2 / len(blocks)) * math.log((hi or 1.0) / (lo or 1.0)) for lo, hi in blocks)

    gamma = 1026.0
    g = [[255.0 * v for v in row] for row in _gray(img)]
    blocks = list(_block_extrema(g, 16))
    s = 0.0
    for lo, hi in blocks:
        top = gamma * (hi - lo) / (gamma - lo)
        bottom = hi + lo - hi * lo / gamma
        m = 0.0 if bottom == 0 else top / bottom
        if m != 0:
            s += m * math.log(m)
    uiconm = gamma - gamma * (1 - s / gamma) ** (1 / len(blocks))
    return 0.0282 * uicm + 0.2953 * uism + 3.5753 * uiconm


def uciqe(img) -> float:
    lum, chroma = [], []
    for p in _pixels(img):
        L, A, B = lab_pixel(*p)
        lum.append(L / 100)
        chroma.append(math.sqrt(A * A + B * B) / 100)
    n = len(lum)
    mc = sum(chroma) / n
    sigma_c = math.sqrt(sum((c - mc) ** 2 for c in chroma) / n)
    top = max(1, int(round(0.01 * n)))
    ordered = sorted(lum)
    con_l = sum(ordered[-top:]) / top - sum(ordered[:top]) / top
    sat = [0.0 if c == 0 or l == 0 else c / l for c, l in zip(chroma, lum)]
    return 0.4680 * sigma_c + 0.2745 * con_l + 0.2576 * sum(sat) / n
