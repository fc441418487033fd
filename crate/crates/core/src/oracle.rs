//! Query interface shared by instances, adversaries and solvers.

use crate::error::Result;
use crate::model::DerivativeBundle;

/// A `k`-th order oracle: returns value and derivatives up to `order` at `x`.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn order(&self) -> usize;
    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle>;

    /// `f(x) − f(x*)` at the most recent query, for oracles that know it.
    fn last_gap(&self) -> Option<f64> {
        None
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn order(&self) -> usize {
        (**self).order()
    }
    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        (**self).query(x, order)
    }
    fn last_gap(&self) -> Option<f64> {
        (**self).last_gap()
    }
}

/// Wraps an oracle and counts the queries made through it.
#[derive(Debug)]
pub struct Counting<O> {
    pub inner: O,
    pub calls: usize,
}

impl<O: Oracle> Counting<O> {
    pub fn new(inner: O) -> Self {
        Counting { inner, calls: 0 }
    }
}

impl<O: Oracle> Oracle for Counting<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        self.calls += 1;
        self.inner.query(x, order)
    }
    fn last_gap(&self) -> Option<f64> {
        self.inner.last_gap()
    }
}

/// An oracle with known optimal value, reporting gaps of its queries.
#[derive(Debug)]
pub struct KnownOptimum<O> {
    pub inner: O,
    pub f_star: f64,
    last: Option<f64>,
}

impl<O: Oracle> KnownOptimum<O> {
    pub fn new(inner: O, f_star: f64) -> Self {
        KnownOptimum {
            inner,
            f_star,
            last: None,
        }
    }
}

impl<O: Oracle> Oracle for KnownOptimum<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        let b = self.inner.query(x, order)?;
        self.last = Some(b.value - self.f_star);
        Ok(b)
    }
    fn last_gap(&self) -> Option<f64> {
        self.last
    }
}
