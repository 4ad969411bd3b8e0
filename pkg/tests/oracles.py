"""Independent reference computations used by the test-suite.

Pure Python on purpose: integer arithmetic is exact, and fp32 results are
produced by rounding exact double results through ``struct`` (a single
correctly rounded +, *, / in double followed by a narrowing to float is
still correctly rounded, since 53 >= 2*24 + 2).
"""
import math
import struct
from fractions import Fraction


def f32(x: float) -> float:
    try:
        return struct.unpack("<f", struct.pack("<f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def half_bits_to_float(h: int) -> float:
    sign = -1.0 if h & 0x8000 else 1.0
    exp = (h >> 10) & 0x1F
    frac = h & 0x3FF
    if exp == 0:
        return sign * math.ldexp(frac, -24)
    if exp == 0x1F:
        return sign * math.inf if frac == 0 else math.nan
    return sign * math.ldexp(1024 + frac, exp - 25)


def float_to_half_bits(x: float) -> int:
    """fp32 value -> binary16 bits, round-to-nearest-even, via exact rationals."""
    x = f32(x)
    if math.isnan(x):
        return 0x7E00
    sign = 0x8000 if math.copysign(1.0, x) < 0 else 0
    v = abs(Fraction(x)) if math.isfinite(x) else None
    if v is None:
        return sign | 0x7C00
    if v < Fraction(1, 2**14):
        # subnormal grid; rounding up to 1024 lands exactly on the smallest normal
        return sign | round(v * 2**24)
    e = math.floor(math.log2(v))
    while Fraction(2) ** e > v:
        e -= 1
    while Fraction(2) ** (e + 1) <= v:
        e += 1
    q = round(v / Fraction(2) ** (e - 10))  # Fraction rounding is half-to-even
    if q == 2048:
        q, e = 1024, e + 1
    if e + 15 >= 31:
        return sign | 0x7C00
    return sign | ((e + 15) << 10) | (q - 1024)


def round_half_even(x: float) -> int:
    return round(x)


def fc_chain(xq, wq, bq, rescale, codification, activation, zp_range, y_scale=1.0):
    """Brute-force FC layer: integer matmul + bias, fp32 rescale, optional Relu,
    round/clip. ``xq`` is [rows][in], ``wq`` is [in][out]."""
    qs, shift, mult = rescale
    lo, hi = zp_range
    out = []
    for row in xq:
        orow = []
        for j in range(len(bq)):
            acc = sum(row[k] * wq[k][j] for k in range(len(row))) + bq[j]
            assert -(2**31) <= acc < 2**31
            y = f32(float(acc))
            if codification == "2mul":
                y = f32(y * f32(float(qs)))
                y = f32(y * f32(math.ldexp(1.0, -shift)))
            else:
                y = f32(y * f32(mult))
            if activation == "relu":
                y = max(y, 0.0)
            q = round_half_even(f32(y / f32(y_scale)))
            orow.append(min(max(q, lo), hi))
        out.append(orow)
    return out


def conv_nested(x, w, strides=(1, 1), pads=(0, 0, 0, 0)):
    """Nested-loop integer cross-correlation, NCHW x OIHW, zero padding."""
    n_, c_, h_, w_ = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    o_, _, kh, kw = len(w), len(w[0]), len(w[0][0]), len(w[0][0][0])
    top, left, bottom, right = pads
    ho = (h_ + top + bottom - kh) // strides[0] + 1
    wo = (w_ + left + right - kw) // strides[1] + 1
    out = [[[[0] * wo for _ in range(ho)] for _ in range(o_)] for _ in range(n_)]
    for n in range(n_):
        for o in range(o_):
            for i in range(ho):
                for j in range(wo):
                    acc = 0
                    for c in range(c_):
                        for di in range(kh):
                            for dj in range(kw):
                                r = i * strides[0] + di - top
                                s = j * strides[1] + dj - left
                                if 0 <= r < h_ and 0 <= s < w_:
                                    acc += x[n][c][r][s] * w[o][c][di][dj]
                    out[n][o][i][j] = acc
    return out
