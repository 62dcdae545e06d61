"""Reference values for the standard normal CDF at 60 significant digits.

Uses mpmath's arbitrary-precision erfc. The grid is frozen in
crates/core/tests/acceptance.rs, the tail and erf points in
crates/core/tests/cdf_oracle.rs.
"""
import mpmath as mp

mp.mp.dps = 60


def ncdf(x):
    return mp.erfc(-mp.mpf(x) / mp.sqrt(2)) / 2


if __name__ == "__main__":
    for i in range(33):
        x = -8 + mp.mpf(i) / 2
        print(f"    ({mp.nstr(x, 3)}, {mp.nstr(ncdf(x), 25, min_fixed=-100, max_fixed=100)}),")
    for x in ["-1", "1.959963985", "-2.326347874", "-0.1", "0.3", "-10", "-20", "-37.5"]:
        print(x, mp.nstr(ncdf(x), 25))
    print("F(-2/sqrt(1.25))", mp.nstr(ncdf(-2 / mp.sqrt(mp.mpf("1.25"))), 25))
    for x in ["0.1", "0.5", "1", "2", "3"]:
        print("erf", x, mp.nstr(mp.erf(mp.mpf(x)), 20))
