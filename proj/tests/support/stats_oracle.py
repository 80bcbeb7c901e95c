"""Regenerates the frozen statistics fixtures in tests/unit/test_stats.cpp.

Everything is evaluated in 50-digit arithmetic with mpmath; p-values use the
closed-form t and F tail integrals through mpmath.betainc.
"""
import mpmath as mp

mp.mp.dps = 50


def mean(xs):
    return mp.fsum(xs) / len(xs)


def var(xs):
    m = mean(xs)
    return mp.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def t_two_sided(t, df):
    return mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)


def f_sf(f, d1, d2):
    return mp.betainc(d2 / 2, d1 / 2, 0, d2 / (d2 + d1 * f), regularized=True)


def welch(a, b):
    a = [mp.mpf(x) for x in a]
    b = [mp.mpf(x) for x in b]
    sa, sb = var(a) / len(a), var(b) / len(b)
    t = (mean(a) - mean(b)) / mp.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    sp = mp.sqrt(((len(a) - 1) * var(a) + (len(b) - 1) * var(b)) / (len(a) + len(b) - 2))
    return t, df, t_two_sided(t, df), (mean(a) - mean(b)) / sp


def student(a, b):
    a = [mp.mpf(x) for x in a]
    b = [mp.mpf(x) for x in b]
    n = len(a) + len(b) - 2
    sp2 = ((len(a) - 1) * var(a) + (len(b) - 1) * var(b)) / n
    t = (mean(a) - mean(b)) / mp.sqrt(sp2 * (mp.mpf(1) / len(a) + mp.mpf(1) / len(b)))
    return t, n, t_two_sided(t, n)


def anova(groups):
    groups = [[mp.mpf(x) for x in g] for g in groups]
    allx = [x for g in groups for x in g]
    gm = mean(allx)
    ssb = mp.fsum(len(g) * (mean(g) - gm) ** 2 for g in groups)
    ssw = mp.fsum((x - mean(g)) ** 2 for g in groups for x in g)
    d1, d2 = len(groups) - 1, len(allx) - len(groups)
    f = (ssb / d1) / (ssw / d2)
    return f, d1, d2, f_sf(f, d1, d2), ssb / (ssb + ssw)


def pearson(x, y):
    x = [mp.mpf(v) for v in x]
    y = [mp.mpf(v) for v in y]
    mx, my = mean(x), mean(y)
    sxy = mp.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / mp.sqrt(mp.fsum((a - mx) ** 2 for a in x) * mp.fsum((b - my) ** 2 for b in y))
    df = len(x) - 2
    t = r * mp.sqrt(df / (1 - r * r))
    return r, t_two_sided(t, df)


def show(name, values):
    print(name, *[mp.nstr(v, 20) for v in values])


if __name__ == "__main__":
    show("welch_small", welch([0, 0, 0, 1], [1, 1, 1, 2]))
    show("welch_unequal", welch([2.1, 3.4, 1.9, 5.6, 4.2], [6.3, 7.1, 5.8, 8.4, 6.9, 7.7]))
    show("student_unequal", student([2.1, 3.4, 1.9, 5.6, 4.2], [6.3, 7.1, 5.8, 8.4, 6.9, 7.7]))
    show("anova3", anova([[3, 4, 5, 4, 3], [6, 7, 6, 8], [2, 3, 2, 4, 3, 2]]))
    show("pearson7", pearson([1, 2, 3, 4, 5, 6, 7], [2.3, 1.9, 4.1, 3.8, 6.2, 5.5, 7.9]))
    show("t_tail", [t_two_sided(mp.mpf("2.5"), mp.mpf(10)), t_two_sided(mp.mpf("0.7"), mp.mpf("3.5")),
                    t_two_sided(mp.mpf(40), mp.mpf(200))])
    show("f_tail", [f_sf(mp.mpf("3.2"), 2, 12), f_sf(mp.mpf("0.4"), 4, 30)])
    show("ibeta", [mp.betainc(mp.mpf("2.5"), mp.mpf("3.5"), 0, mp.mpf("0.3"), regularized=True),
                   mp.betainc(mp.mpf(50), mp.mpf("0.5"), 0, mp.mpf("0.99"), regularized=True)])
