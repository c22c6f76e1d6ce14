"""Double-double arithmetic on pairs of floats.

Only the handful of operations needed to evaluate exact expectations whose
terms cancel over many orders of magnitude.
"""

_SPLIT = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def dd(x):
    return (float(x), 0.0)


def add(x, y):
    s, e = two_sum(x[0], y[0])
    e += x[1] + y[1]
    return two_sum(s, e)


def neg(x):
    return (-x[0], -x[1])


def sub(x, y):
    return add(x, neg(y))


def mul(x, y):
    p, e = two_prod(x[0], y[0])
    e += x[0] * y[1] + x[1] * y[0]
    return two_sum(p, e)


def div(x, y):
    q1 = x[0] / y[0]
    r = sub(x, mul(dd(q1), y))
    q2 = r[0] / y[0]
    r = sub(r, mul(dd(q2), y))
    q3 = r[0] / y[0]
    return add(two_sum(q1, q2), dd(q3))


def power(x, k):
    result = dd(1.0)
    base = x
    while k > 0:
        if k & 1:
            result = mul(result, base)
        base = mul(base, base)
        k >>= 1
    return result


def to_float(x):
    return x[0] + x[1]
