"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    pip install --no-build-isolation -e crates/py
"""

import math

import fmrvol


def main():
    c = fmrvol.bs_price(100.0, 0.0, 0.165, 0.04, 100.0, 3.0)
    assert abs(c - 17.2978444069) < 1e-9, c

    p = fmrvol.Pricer(nu=0.4, rho=-0.2)
    assert abs(math.log(p.sigma_bar) - math.log(0.165)) < 1e-12

    out = p.price(100.0, epsilon=0.005)
    expected = out["C_BS"] + math.sqrt(0.005) * out["C3"] + 0.005 * (out["C6_z"] + out["C6_tilde"])
    assert abs(out["total"] - expected) < 1e-12

    # eps = 0 collapses to Black-Scholes
    assert p.price(100.0, epsilon=0.0)["total"] == out["C_BS"]

    # C3 vanishes without correlation
    assert fmrvol.Pricer(nu=0.4).c3(100.0) == 0.0

    w = p.band("writer", 100.0)
    pl = p.band("plain", 100.0)
    assert w["upper"] - w["y_star"] == w["y_star"] - w["lower"]
    assert w["half_width"] == pl["half_width"]

    av = fmrvol.scott_averages(0.0, 0.5)
    assert abs(av["f_phi_prime"] + 4.847883565943) < 1e-10

    figs = fmrvol.figures(0.4, "fig3", 11)
    assert sorted(figs) == ["fig3_rho_-0.2", "fig3_rho_0"]
    assert figs["fig3_rho_0"].splitlines()[0] == "S,C_BS,C_with_C3,C_with_C3_and_C6"

    csv = p.simulate(n_paths=200, n_steps=50, policies=["band", "none"])
    assert len(csv.strip().splitlines()) == 5

    for cid, ok, detail in fmrvol.verify([1, 4, 5]):
        assert ok, (cid, detail)

    try:
        p.band("buyer", 100.0)
    except ValueError:
        pass
    else:
        raise AssertionError("bad side accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
