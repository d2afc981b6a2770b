"""Regenerate the deterministic fixtures in crates/core/tests/fixtures."""
import math
import os
from scipy.special import gammaln

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures")
WAVELENGTH = 1.555e-6
D_RX = 0.41
R0 = 0.09
J = 35
N = 200
RATE = 100.0
ETA_PHI_ON_DB = -2.8


def radial_order(j):
    n = 0
    while n * (n + 3) // 2 < j:
        n += 1
    return n


def g(j):
    n = radial_order(j)
    lg = (gammaln(n - 5 / 6) + gammaln(23 / 6) + gammaln(11 / 6) - gammaln(n + 23 / 6))
    # Gamma(n - 5/6) is positive for n >= 1
    return (n + 1) / math.pi * math.exp(lg) * math.sin(5 * math.pi / 6)


def kolmogorov(j):
    return g(j) * (D_RX / R0) ** (5 / 3)


def eta_on(k):
    return math.prod((1 + 2 * k * kolmogorov(j) ** 0.6 * g(j) ** -0.3) ** -0.5 for j in range(1, J + 1))


def closed_loop_variances():
    # flatter-than-Kolmogorov residual spectrum scaled to the target η_φ,ON
    target = 10 ** (ETA_PHI_ON_DB / 10)
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eta_on(mid) > target:
            lo = mid
        else:
            hi = mid
    k = 0.5 * (lo + hi)
    return [k * kolmogorov(j) ** 0.6 * g(j) ** -0.3 for j in range(1, J + 1)]


def write_wfs(name, variances):
    # alternating ±s with zero mean gives unbiased variance s²·N/(N−1) = v
    amps = [math.sqrt(v * (N - 1) / N) for v in variances]
    with open(os.path.join(OUT, name), "w") as f:
        f.write(f"# wavelength_m={WAVELENGTH:e} d_rx_m={D_RX}\n")
        f.write("t_s,valid," + ",".join(f"b{j}" for j in range(1, len(variances) + 1)) + "\n")
        for i in range(N):
            # +,-,-,+ repeating: zero mean over every 4 samples
            sign = 1 if (i + (i // 2)) % 2 == 0 else -1
            row = [repr(sign * a) for a in amps]
            f.write(f"{repr(i / RATE)},1," + ",".join(row) + "\n")


def write_session(name, signal, noise, qz, qx, count=120):
    with open(os.path.join(OUT, name), "w") as f:
        f.write("t_s,signal_hz,noise_hz,qber_z,qber_x,skr_bps\n")
        for i in range(count):
            w = math.sin(2 * math.pi * i / 17.0)
            f.write(
                f"{10 * i},{signal * (1 + 0.05 * w):.1f},{noise * (1 + 0.02 * w):.1f},"
                f"{qz * (1 + 0.1 * w):.5f},{qx * (1 - 0.1 * w):.5f},\n"
            )


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    write_wfs("field_ao_off.csv", [kolmogorov(j) for j in range(1, J + 1)])
    write_wfs("field_ao_on.csv", closed_loop_variances())
    write_session("session_snspd.csv", 20.4e3, 2e3, 0.008, 0.009)
    write_session("session_spad.csv", 3.4e3, 2e3, 0.020, 0.020)
