//! Independent high-precision reference implementations.
//!
//! Values are fixed-point big integers with `FRAC_BITS` fractional bits. The
//! logarithm uses `ln y = 2 atanh((y-1)/(y+1))` after reducing `y` to `[1,2)`.
#![allow(dead_code)]

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

const FRAC_BITS: u32 = 320;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fx(BigInt);

impl Fx {
    pub fn int(v: i64) -> Self {
        Fx(BigInt::from(v) << FRAC_BITS)
    }

    pub fn f(x: f64) -> Self {
        assert!(x.is_finite());
        let (mantissa, exp, sign) = x.integer_decode();
        let m = BigInt::from(mantissa) * BigInt::from(sign);
        let shift = exp as i64 + FRAC_BITS as i64;
        Fx(if shift >= 0 {
            m << shift as u32
        } else {
            m >> (-shift) as u32
        })
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 64 significant bits before converting.
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as u32).to_f64().unwrap();
        top * 2f64.powi((drop - FRAC_BITS as i64) as i32)
    }

    pub fn add(&self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fx) -> Fx {
        Fx((&self.0 * &o.0) >> FRAC_BITS)
    }

    pub fn div(&self, o: &Fx) -> Fx {
        Fx((&self.0 << FRAC_BITS) / &o.0)
    }

    pub fn sqrt(&self) -> Fx {
        assert!(!self.0.is_negative());
        Fx((&self.0 << FRAC_BITS).sqrt())
    }

    fn atanh_small(t: &Fx) -> Fx {
        let t2 = t.mul(t);
        let mut power = t.clone();
        let mut sum = Fx(BigInt::zero());
        let mut i = 1i64;
        while !power.0.is_zero() {
            sum = sum.add(&Fx(&power.0 / i));
            power = power.mul(&t2);
            i += 2;
        }
        sum
    }

    pub fn ln(&self) -> Fx {
        assert_eq!(self.0.sign(), Sign::Plus);
        let e = self.0.bits() as i64 - 1 - FRAC_BITS as i64;
        let y = if e >= 0 {
            Fx(&self.0 >> e as u32)
        } else {
            Fx(&self.0 << (-e) as u32)
        };
        let one = Fx::int(1);
        let t = y.sub(&one).div(&y.add(&one));
        let ln_y = Fx::atanh_small(&t).add(&Fx::atanh_small(&t));
        let third = Fx::int(1).div(&Fx::int(3));
        let ln2 = Fx::atanh_small(&third).add(&Fx::atanh_small(&third));
        ln_y.add(&Fx(&ln2.0 * BigInt::from(e)))
    }
}

fn log_term(delta: f64) -> Fx {
    Fx::int(4).div(&Fx::f(delta)).ln()
}

fn middle(k: usize, e_random: f64) -> Fx {
    let kf = Fx::int(k as i64);
    let km1 = Fx::int(k as i64 - 1);
    km1.sub(&kf.mul(&Fx::f(e_random)))
}

pub fn theorem1(k: usize, m: u64, n: u64, delta: f64, e_clean: f64, e_random: f64) -> f64 {
    let kf = Fx::int(k as i64);
    let sk = kf.sqrt();
    let c = Fx::int(2 * k as i64)
        .add(&sk)
        .add(&Fx::int(m as i64).div(&Fx::int(n as i64).mul(&sk)));
    let conc = c.mul(&log_term(delta).div(&Fx::int(2 * m as i64)).sqrt());
    Fx::f(e_clean).add(&middle(k, e_random)).add(&conc).to_f64()
}

pub fn relaxed(k: usize, m: u64, delta: f64, e_clean: f64, e_random: f64) -> f64 {
    let conc = Fx::int(4 * k as i64).mul(&log_term(delta).div(&Fx::int(m as i64)).sqrt());
    Fx::f(e_clean).add(&middle(k, e_random)).add(&conc).to_f64()
}

pub fn supervised_ceiling(k: usize, delta: f64, epsilon: f64, delta_tilde: f64, total: u64) -> f64 {
    let dt = Fx::f(delta_tilde);
    let frac = dt.div(&Fx::int(1).add(&dt));
    let head = Fx::int(k as i64 + 1).mul(&Fx::f(epsilon));
    let tail = Fx::int(4 * k as i64)
        .mul(&log_term(delta).sqrt())
        .div(&frac.mul(&Fx::int(total as i64)).sqrt());
    head.add(&tail).to_f64()
}

pub fn bound_map(
    k: usize,
    delta: f64,
    epsilon: f64,
    delta_tilde: f64,
    total: u64,
    gamma: f64,
) -> f64 {
    let dt = Fx::f(delta_tilde);
    let g = Fx::f(gamma);
    let keep = Fx::int(1).sub(&g);
    let inflation = Fx::int(1)
        .add(&dt)
        .mul(&keep)
        .div(&dt.mul(&keep).sub(&g))
        .sqrt();
    let head = Fx::int(k as i64 + 1).mul(&Fx::f(epsilon));
    let tail = Fx::int(4 * k as i64)
        .mul(&log_term(delta).sqrt())
        .mul(&inflation)
        .div(&Fx::int(total as i64).sqrt());
    head.add(&tail).to_f64()
}

/// Unrounded sample-complexity requirement.
pub fn rate_complexity(
    k: usize,
    delta: f64,
    delta_tilde: f64,
    p: f64,
    c1: f64,
    c2: f64,
    e_d_star: f64,
) -> f64 {
    let dt = Fx::f(delta_tilde);
    let one = Fx::int(1);
    let upper = Fx::f(e_d_star).add(&Fx::f(c2));
    let odds = upper.div(&one.sub(&upper));
    let lead = Fx::int(4 * k as i64).div(&Fx::f(p).mul(&Fx::f(c1)));
    let bracket = dt
        .add(&one)
        .div(&dt.sub(&odds))
        .sqrt()
        .sub(&dt.add(&one).div(&dt).sqrt());
    lead.mul(&lead)
        .mul(&bracket)
        .mul(&bracket)
        .mul(&log_term(delta))
        .to_f64()
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// `floor(N (dt(1-g) - g) / ((1+dt)(1-g)))` in exact rationals.
pub fn max_randomized_count(total: u64, gamma: f64, delta_tilde: f64) -> u64 {
    let g = rational(gamma);
    let dt = rational(delta_tilde);
    let one = BigRational::one();
    let num = &dt * (&one - &g) - &g;
    let den = (&one + &dt) * (&one - &g);
    (num * BigRational::from_integer(total.into()) / den)
        .floor()
        .to_integer()
        .to_u64()
        .unwrap()
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        ((actual - expected) / expected).abs()
    }
}

/// Random inputs shared by the fidelity checks.
pub mod draw {
    use plcert::bounds::ProblemSpec;
    use rand::Rng;

    pub fn spec<R: Rng>(rng: &mut R) -> ProblemSpec {
        let k = rng.random_range(2..=10);
        let ceiling = 1.0 - 1.0 / k as f64;
        ProblemSpec::new(
            k,
            rng.random_range(0.001..0.5),
            rng.random_range(0.0..0.2f64.min(ceiling)),
            rng.random_range(0.01..0.9),
        )
        .unwrap()
    }

    /// `(k, m, n, delta, e_clean, e_random)` with `m < n`.
    pub fn bound_inputs<R: Rng>(rng: &mut R) -> (usize, u64, u64, f64, f64, f64) {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(10..10_000_000u64);
        let m = rng.random_range(1..n);
        (
            k,
            m,
            n,
            rng.random_range(0.001..0.5),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        )
    }

    pub fn feasible_gamma<R: Rng>(rng: &mut R, spec: &ProblemSpec) -> f64 {
        rng.random_range(0.0..spec.gamma_threshold() * 0.999)
    }
}
