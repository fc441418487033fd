//! The chain family: parameters, rotation, evaluation and serialization.

pub mod basis;
pub mod bundle;
pub mod eval;
pub mod io;
pub mod params;

pub use basis::{OrthoSpan, RotationBasis};
pub use bundle::{Contraction, DerivativeBundle, Frame, ReducedBundle};
pub use eval::{eval_chain, eval_chain_bundle, eval_rotated, g_bregman, g_derivative};
pub use params::{select_gamma, validate_assumptions, validate_params, InstanceParams, Regime, Violation};

use crate::error::{Error, Result};
use crate::oracle::Oracle;

/// A fully specified rotated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: InstanceParams,
    pub basis: RotationBasis,
}

impl Instance {
    pub fn new(params: InstanceParams, basis: RotationBasis) -> Result<Self> {
        if !basis.is_complete() {
            return Err(Error::InconsistentBasis(format!(
                "{} of {} vectors committed",
                basis.committed_count(),
                basis.chain_len()
            )));
        }
        if basis.chain_len() != params.chain_len || basis.dim() != params.dim {
            return Err(Error::InvalidInput(
                "basis shape does not match parameters".into(),
            ));
        }
        Ok(Instance { params, basis })
    }

    /// Instance whose chain vectors are the first coordinate axes.
    pub fn axis_aligned(params: InstanceParams) -> Result<Self> {
        let basis = RotationBasis::identity(params.chain_len, params.dim)?;
        Self::new(params, basis)
    }

    pub fn eval(&self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        eval_rotated(&self.params, &self.basis, x, order)
    }
}

impl Oracle for Instance {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn order(&self) -> usize {
        self.params.k
    }

    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        self.eval(x, order)
    }
}
