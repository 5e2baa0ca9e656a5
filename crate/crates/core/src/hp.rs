//! Thin arbitrary-precision scalar over `astro_float::BigFloat`.

use astro_float::{BigFloat, Consts, RoundingMode};

use crate::error::{Error, Result};
use crate::linalg::Scalar;

const RM: RoundingMode = RoundingMode::ToEven;

/// A big float that carries its working precision in bits.
#[derive(Debug, Clone)]
pub struct Hp {
    pub v: BigFloat,
    pub p: usize,
}

impl Hp {
    pub fn from_f64(x: f64, p: usize) -> Self {
        Self { v: BigFloat::from_f64(x, p), p }
    }

    pub fn from_int(x: i64, p: usize) -> Self {
        Self { v: BigFloat::from_i64(x, p), p }
    }

    fn wrap(&self, v: BigFloat) -> Self {
        Self { v, p: self.p }
    }

    pub fn sin(&self, cc: &mut Consts) -> Self {
        self.wrap(self.v.sin(self.p, RM, cc))
    }

    pub fn cos(&self, cc: &mut Consts) -> Self {
        self.wrap(self.v.cos(self.p, RM, cc))
    }

    pub fn ln(&self, cc: &mut Consts) -> Self {
        self.wrap(self.v.ln(self.p, RM, cc))
    }

    pub fn pi(p: usize, cc: &mut Consts) -> Self {
        Self { v: cc.pi(p, RM), p }
    }

    pub fn mul_f64(&self, x: f64) -> Self {
        self.mul(&Hp::from_f64(x, self.p))
    }

    pub fn is_finite(&self) -> bool {
        !(self.v.is_nan() || self.v.is_inf())
    }
}

/// Fresh constants cache (π, ln 2, ...).
pub fn consts() -> Result<Consts> {
    Consts::new().map_err(|e| Error::Precision(format!("constant cache: {e:?}")))
}

impl Scalar for Hp {
    fn zero_like(&self) -> Self {
        Hp::from_int(0, self.p)
    }
    fn one_like(&self) -> Self {
        Hp::from_int(1, self.p)
    }
    fn add(&self, o: &Self) -> Self {
        self.wrap(self.v.add(&o.v, self.p, RM))
    }
    fn sub(&self, o: &Self) -> Self {
        self.wrap(self.v.sub(&o.v, self.p, RM))
    }
    fn mul(&self, o: &Self) -> Self {
        self.wrap(self.v.mul(&o.v, self.p, RM))
    }
    fn div(&self, o: &Self) -> Self {
        self.wrap(self.v.div(&o.v, self.p, RM))
    }
    fn sqrt(&self) -> Self {
        self.wrap(self.v.sqrt(self.p, RM))
    }
    fn abs(&self) -> Self {
        self.wrap(self.v.abs())
    }
    fn neg(&self) -> Self {
        self.wrap(self.v.neg())
    }
    fn lt(&self, o: &Self) -> bool {
        self.v.cmp(&o.v) == Some(-1)
    }
    fn is_zero(&self) -> bool {
        self.v.is_zero()
    }
    fn epsilon(&self) -> Self {
        // 2^{-(p-2)}
        let two = BigFloat::from_i64(2, self.p);
        let e = two.powi(self.p - 2, self.p, RM);
        self.wrap(BigFloat::from_i64(1, self.p).div(&e, self.p, RM))
    }
    fn to_f64(&self) -> f64 {
        if self.v.is_zero() {
            return 0.0;
        }
        // astro-float has no direct conversion; its decimal display is exact
        // enough to round-trip through f64 parsing.
        format!("{}", self.v).parse::<f64>().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_arithmetic_and_conversion() {
        let p = 256;
        let a = Hp::from_f64(1.5, p);
        let b = Hp::from_f64(0.25, p);
        assert_eq!(a.add(&b).to_f64(), 1.75);
        assert_eq!(a.div(&b).to_f64(), 6.0);
        assert!((Hp::from_f64(2.0, p).sqrt().to_f64() - std::f64::consts::SQRT_2).abs() < 1e-16);
        assert!(b.lt(&a) && !a.lt(&b));
        assert_eq!(Hp::from_f64(-3.0, p).abs().to_f64(), 3.0);
    }

    #[test]
    fn tiny_values_survive_conversion() {
        let x = Hp::from_f64(7.0387e-44, 512);
        assert!((x.to_f64() / 7.0387e-44 - 1.0).abs() < 1e-15);
        let eps = x.epsilon().to_f64();
        assert!(eps > 0.0 && eps < 1e-150);
    }

    #[test]
    fn trig_at_pi() {
        let mut cc = consts().unwrap();
        let pi = Hp::pi(256, &mut cc);
        assert!(pi.sin(&mut cc).to_f64().abs() < 1e-70);
        assert!((pi.cos(&mut cc).to_f64() + 1.0).abs() < 1e-16);
    }
}
