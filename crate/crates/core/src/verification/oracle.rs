//! Double-double arithmetic (about 32 significant digits) and a
//! Black-Scholes price built on it. Shares no code with the `f64` pricing
//! path; used as the reference for price and derivative checks.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::model::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

pub const LN2: Dd = Dd::new(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
pub const PI: Dd = Dd::new(std::f64::consts::PI, 1.224_646_799_147_353_2e-16);
/// Unit roundoff of the format, `2^-104`.
pub const EPS: f64 = 4.930_380_657_631_324e-32;

impl Dd {
    pub const ZERO: Dd = Dd::new(0.0, 0.0);
    pub const ONE: Dd = Dd::new(1.0, 0.0);

    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn scale(self, p2: f64) -> Self {
        Dd::new(self.hi * p2, self.lo * p2)
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let y = Dd::from(self.hi.sqrt());
        y + (self - y.sqr()) / y.scale(2.0)
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // |r| <= ln2 / 2, then shrink by 2^10 and square back up
        let r = (self - LN2 * Dd::from(k)).scale(1.0 / 1024.0);
        let mut term = r;
        let mut s = r;
        for n in 2..=14 {
            term = term * r / Dd::from(n as f64);
            s = s + term;
        }
        for _ in 0..10 {
            s = s.scale(2.0) + s.sqr();
        }
        let e = s + Dd::ONE;
        let p = 2f64.powi(k as i32);
        e.scale(p)
    }

    pub fn ln(self) -> Self {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd::new(v, 0.0)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd::new(hi, lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd::new(-self.hi, -self.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd::new(hi, lo)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd::new(hi, lo) + Dd::from(q3)
    }
}

fn inv_sqrt_pi() -> Dd {
    Dd::ONE / PI.sqrt()
}

/// `erf(x)` for `x >= 0` by the all-positive series
/// `(2/sqrt(pi)) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!`.
pub fn erf_series(x: Dd) -> Dd {
    let x2 = x.sqr();
    let two_x2 = x2.scale(2.0);
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        term = term * two_x2 / Dd::from((2 * n + 1) as f64);
        sum = sum + term;
        if term.hi < 1e-34 * sum.hi || n > 5000 {
            break;
        }
    }
    sum * (-x2).exp() * inv_sqrt_pi().scale(2.0)
}

/// `erfc(x)` for `x >= 3` by backward evaluation of the continued fraction
/// `e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
pub fn erfc_cf(x: Dd, terms: usize) -> Dd {
    let mut acc = x;
    for k in (1..=terms).rev() {
        acc = x + Dd::from(k as f64 * 0.5) / acc;
    }
    (-x.sqr()).exp() * inv_sqrt_pi() / acc
}

const CF_TERMS: usize = 1500;

/// Standard normal distribution function, relative accuracy in both tails.
pub fn norm_cdf(d: Dd) -> Dd {
    let x = d.abs() / Dd::from(2.0).sqrt();
    let tail = if x.hi < 3.0 {
        (Dd::ONE - erf_series(x)).scale(0.5)
    } else if x.hi < 27.0 {
        erfc_cf(x, CF_TERMS).scale(0.5)
    } else {
        Dd::ZERO
    };
    if d.hi >= 0.0 {
        Dd::ONE - tail
    } else {
        tail
    }
}

/// Black-Scholes call price with every step in double-double.
pub fn bs_price(s: Dd, t: f64, sigma: f64, p: &MarketParams) -> Dd {
    let tau = Dd::from(p.expiry) - Dd::from(t);
    let sig = Dd::from(sigma);
    let sd = sig * tau.sqrt();
    let k = Dd::from(p.strike);
    let r = Dd::from(p.r);
    let drift = (r + sig.sqr().scale(0.5)) * tau;
    let d1 = ((s / k).ln() + drift) / sd;
    let d2 = d1 - sd;
    s * norm_cdf(d1) - k * (-(r * tau)).exp() * norm_cdf(d2)
}

/// `d^n C / dS^n` by Richardson-extrapolated central differences in
/// double-double, with step `S eps^{1/(n+4)}`.
pub fn fd_derivative(n: usize, s: f64, t: f64, sigma: f64, p: &MarketParams) -> f64 {
    let h = s * EPS.powf(1.0 / (n as f64 + 4.0));
    let central = |h: f64| {
        let mut acc = Dd::ZERO;
        let mut binom = 1.0f64;
        for k in 0..=n {
            let offset = Dd::from(n as f64 / 2.0 - k as f64) * Dd::from(h);
            let v = bs_price(Dd::from(s) + offset, t, sigma, p) * Dd::from(binom);
            acc = if k % 2 == 0 { acc + v } else { acc - v };
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        let mut hn = Dd::ONE;
        for _ in 0..n {
            hn = hn * Dd::from(h);
        }
        acc / hn
    };
    let coarse = central(h);
    let fine = central(0.5 * h);
    ((fine.scale(4.0) - coarse) / Dd::from(3.0)).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_identities() {
        let third = Dd::ONE / Dd::from(3.0);
        let back = third * Dd::from(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        let two = Dd::from(2.0).sqrt();
        assert!((two.sqr() - Dd::from(2.0)).to_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_and_log() {
        let e = Dd::ONE.exp();
        // e = 2.718281828459045 + 1.4456468917292502e-16
        assert_eq!(e.hi, std::f64::consts::E);
        assert!((e.lo - 1.445_646_891_729_250_2e-16).abs() < 1e-31);
        for v in [0.3, 1.7, 123.0, 1e-3] {
            let x = Dd::from(v);
            assert!(((x.ln().exp() - x) / x).to_f64().abs() < 1e-30);
        }
        assert!((LN2.exp() - Dd::from(2.0)).to_f64().abs() < 1e-30);
    }

    #[test]
    fn erf_routes_agree_at_the_switch() {
        for x in [3.0, 3.5, 4.0] {
            let a = Dd::ONE - erf_series(Dd::from(x));
            let b = erfc_cf(Dd::from(x), CF_TERMS);
            // the series loses digits to cancellation as erfc shrinks
            assert!(((a - b) / b).to_f64().abs() < 1e-22, "{x}");
        }
        // erf(1) = 0.8427007929497148693412206350826
        let e1 = erf_series(Dd::ONE);
        assert!((e1 - Dd::new(0.842_700_792_949_714_9, 0.0)).to_f64().abs() < 1e-16);
    }
}
