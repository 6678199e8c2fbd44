use crate::error::{Result, SolverError};
use crate::hfunc::HOracle;
use crate::oracle::ConvexG;
use crate::Vector;

/// `min f(x) = g(x) − h(x)`.
#[derive(Clone, Debug)]
pub struct DCProgram {
    pub g: ConvexG,
    pub h: HOracle,
    pub dim: usize,
}

impl DCProgram {
    pub fn new(g: ConvexG, h: HOracle) -> Result<Self> {
        let dim = g.dim();
        if dim == 0 {
            return Err(SolverError::InvalidSpec("program dimension must be positive".into()));
        }
        if let HOracle::FiniteMax(fm) = &h {
            let found = fm.members()[0].dim();
            if found != dim {
                return Err(SolverError::DimensionMismatch { expected: dim, found });
            }
        }
        Ok(Self { g, h, dim })
    }

    pub fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(SolverError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        crate::ensure_finite(x, "point")
    }

    pub fn h_value(&self, x: &Vector) -> Result<f64> {
        self.h.value(x)
    }

    /// `f(x)`; `+∞` outside the domain of `g`'s prox part.
    pub fn f_value(&self, x: &Vector) -> Result<f64> {
        let g = self.g.eval(x);
        if g.is_nan() {
            return Err(SolverError::Oracle("g returned NaN".into()));
        }
        let h = self.h_value(x)?;
        Ok(g - h)
    }
}
