use proptest::prelude::*;

use fmrvol::bs_kernel::{bs_derivatives, bs_price};
use fmrvol::ou_calculus::scott_closed_form;
use fmrvol::simulator::{liquidation, rebalance, utility, PathState};
use fmrvol::{HedgeInputs, MarketParams, OUVolModel, Pricer, Side};

fn market() -> impl Strategy<Value = MarketParams> {
    (0.0..0.1f64, -0.1..0.2f64, 0.3..4.0f64, 50.0..150.0f64, 0.2..4.0f64)
        .prop_map(|(r, a, g, k, t)| MarketParams::new(r, a, g, k, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn band_is_symmetric_and_scales_as_cube_root(
        p in market(),
        sigma_bar in 0.05..0.6f64,
        nu in 0.0..1.5f64,
        s in 10.0..300.0f64,
        frac in 0.0..0.99f64,
        dz in -2.0..2.0f64,
        eps in 1e-4..0.1f64,
    ) {
        let model = OUVolModel::scott_with_sigma_bar(sigma_bar, nu, 0.0);
        let h = HedgeInputs { params: &p, model: &model, sigma_bar };
        let (t, z) = (frac * p.expiry, model.m + dz * nu.max(0.1));
        let plain = h.band(Side::Plain, s, t, z, eps).unwrap();
        let writer = h.band(Side::Writer, s, t, z, eps).unwrap();
        for b in [plain, writer] {
            prop_assert!(b.half_width >= 0.0);
            prop_assert_eq!(b.upper - b.y_star, b.y_star - b.lower);
        }
        // each side's width sits on a grid of spacing at most 2^-52 (|y*| + h)
        let quantum = |b: &fmrvol::HedgeBand| f64::EPSILON * (b.y_star.abs() + b.half_width);
        prop_assert!((plain.half_width - writer.half_width).abs() <= quantum(&plain) + quantum(&writer));
        let delta = bs_derivatives(s, t, sigma_bar, &p, 1).unwrap().derivative(1).unwrap();
        prop_assert!((writer.y_star - plain.y_star - delta).abs() <= 1e-12 * (1.0 + plain.y_star.abs()));
        let other = h.band(Side::Plain, s, t, z, eps / 8.0).unwrap();
        let q = quantum(&plain) + 2.0 * quantum(&other);
        prop_assert!((plain.half_width - 2.0 * other.half_width).abs() <= 1e-12 * plain.half_width + q);
    }

    #[test]
    fn inner_profile_pastes_smoothly(
        p in market(),
        sigma_bar in 0.05..0.6f64,
        nu in 0.05..1.5f64,
        s in 10.0..300.0f64,
        dz in -2.0..2.0f64,
    ) {
        prop_assume!(p.excess_return().abs() > 1e-3);
        let model = OUVolModel::scott_with_sigma_bar(sigma_bar, nu, 0.0);
        let h = HedgeInputs { params: &p, model: &model, sigma_bar };
        let prof = h.inner_profile(s, 0.0, model.m + dz * nu).unwrap();
        prop_assert!(prof.a > 0.0 && prof.b <= 0.0);
        let y = prof.y_plus;
        prop_assert!((prof.dy(y) + s).abs() <= 1e-10 * s);
        prop_assert!((prof.dy(-y) - s).abs() <= 1e-10 * s);
        prop_assert!(prof.dyy(y).abs() <= 1e-10 * prof.b.abs());
    }

    #[test]
    fn black_scholes_shape(p in market(), sigma in 0.05..0.8f64, s in 1.0..500.0f64, frac in 0.0..0.99f64) {
        let t = frac * p.expiry;
        let g = bs_derivatives(s, t, sigma, &p, 2).unwrap();
        let intrinsic = (s - p.strike * (-p.r * (p.expiry - t)).exp()).max(0.0);
        prop_assert!(g.price >= intrinsic - 1e-10 * s && g.price <= s);
        let d = g.derivative(1).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(g.derivative(2).unwrap() >= 0.0);
        let up = bs_price(s * 1.01, t, sigma, &p).unwrap().price;
        prop_assert!(up >= g.price);
    }

    #[test]
    fn jensen_and_cauchy_schwarz(m in -4.0..1.0f64, nu in 0.01..1.5f64) {
        let c = scott_closed_form(m, nu);
        prop_assert!(c.sigma_bar_sq * c.inv_tau_sq >= 1.0);
        prop_assert!(c.f_phi_prime * c.f_phi_prime <= c.sigma_bar_sq * c.phi_prime_sq * (1.0 + 1e-12));
    }

    #[test]
    fn rebalance_lands_in_band_and_never_creates_value(
        y in -5.0..5.0f64,
        centre in -3.0..3.0f64,
        half in 0.0..2.0f64,
        s in 1.0..300.0f64,
        lambda in 0.0..0.01f64,
    ) {
        let st = PathState { t: 0.0, b: 7.0, y, s, z: 0.0 };
        let (lo, hi) = (centre - half, centre + half);
        let (next, trade) = rebalance(&st, lo, hi, lambda);
        prop_assert!(next.y >= lo && next.y <= hi);
        prop_assert_eq!(trade.is_none(), y >= lo && y <= hi);
        // marked at mid, trading only loses the cost
        prop_assert!(next.b + next.y * s <= st.b + st.y * s + 1e-9 * s);
        prop_assert!(liquidation(y, s, lambda) <= y * s + 1e-12 * s);
    }

    #[test]
    fn utility_is_increasing(x in -20.0..20.0f64, dx in 1e-3..5.0f64, g in 0.1..3.0f64) {
        prop_assert!(utility(x + dx, g) >= utility(x, g));
        prop_assert!(g * x > 30.0 || utility(x + dx, g) > utility(x, g));
        prop_assert!(utility(x, g) <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn c3_is_odd_in_rho_and_expansion_collapses(rho in 0.05..0.9f64, nu in 0.1..1.0f64, s in 40.0..250.0f64) {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        let pos = Pricer::new(p, OUVolModel::scott_with_sigma_bar(0.165, nu, rho)).unwrap();
        let neg = Pricer::new(p, OUVolModel::scott_with_sigma_bar(0.165, nu, -rho)).unwrap();
        let (a, b) = (pos.c3(s, 0.0).unwrap(), neg.c3(s, 0.0).unwrap());
        prop_assert!((a + b).abs() <= 1e-13 * a.abs().max(1e-300));
        let flat = pos.price(s, 0.0, pos.model().m, 0.0).unwrap();
        prop_assert_eq!(flat.total, flat.c0);
    }
}
