//! Scalar arithmetic used by the closed-form parameter formulas, available in
//! binary64 and in a 192-bit software float (about 57 decimal digits).

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    Extended,
}

/// Minimal real-number interface for evaluating the closed forms.
pub trait Real: Clone + Sized {
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn powf(&self, e: &Self) -> Self;
    fn ln(&self) -> Self;

    fn powr(&self, e: f64) -> Self {
        self.powf(&Self::from_f64(e))
    }
    fn sqrt(&self) -> Self {
        self.powr(0.5)
    }
    fn lt(&self, o: &Self) -> bool;
    fn max(self, o: Self) -> Self {
        if self.lt(&o) {
            o
        } else {
            self
        }
    }
    fn min(self, o: Self) -> Self {
        if o.lt(&self) {
            o
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn powf(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
}

const BITS: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constants cache"));
}

/// Software float with `BITS` bits of mantissa.
#[derive(Debug, Clone)]
pub struct Ext(BigFloat);

impl Ext {
    pub fn inner(&self) -> &BigFloat {
        &self.0
    }

    pub fn to_decimal_string(&self) -> String {
        CONSTS.with(|cc| {
            self.0
                .format(Radix::Dec, RM, &mut cc.borrow_mut())
                .unwrap_or_else(|_| "NaN".to_string())
        })
    }
}

impl Real for Ext {
    fn from_f64(x: f64) -> Self {
        Ext(BigFloat::from_f64(x, BITS))
    }
    fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        self.to_decimal_string().parse().unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        Ext(self.0.add(&o.0, BITS, RM))
    }
    fn sub(&self, o: &Self) -> Self {
        Ext(self.0.sub(&o.0, BITS, RM))
    }
    fn mul(&self, o: &Self) -> Self {
        Ext(self.0.mul(&o.0, BITS, RM))
    }
    fn div(&self, o: &Self) -> Self {
        Ext(self.0.div(&o.0, BITS, RM))
    }
    fn powf(&self, e: &Self) -> Self {
        CONSTS.with(|cc| Ext(self.0.pow(&e.0, BITS, RM, &mut cc.borrow_mut())))
    }
    fn ln(&self) -> Self {
        CONSTS.with(|cc| Ext(self.0.ln(BITS, RM, &mut cc.borrow_mut())))
    }
    fn lt(&self, o: &Self) -> bool {
        matches!(self.0.cmp(&o.0), Some(c) if c < 0)
    }
}

/// `n!` in the generic scalar type.
pub fn factorial<R: Real>(n: usize) -> R {
    (1..=n).fold(R::from_f64(1.0), |acc, i| acc.mul(&R::from_f64(i as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_matches_f64_on_benign_inputs() {
        let a = Ext::from_f64(2.0).powr(0.5);
        assert!((a.to_f64() - 2f64.sqrt()).abs() < 1e-15);
        let b = Ext::from_f64(10.0).ln();
        assert!((b.to_f64() - 10f64.ln()).abs() < 1e-15);
        assert!(Ext::from_f64(1.0).lt(&Ext::from_f64(1.5)));
        assert!(!Ext::from_f64(1.5).lt(&Ext::from_f64(1.5)));
    }

    #[test]
    fn extended_keeps_digits_beyond_binary64() {
        // (1 + 2^-60) - 1 vanishes in binary64 but not at 192 bits
        let tiny = Ext::from_f64(2f64.powi(-60));
        let one = Ext::from_f64(1.0);
        let r = one.add(&tiny).sub(&one);
        assert_eq!(r.to_f64(), 2f64.powi(-60));
    }
}
