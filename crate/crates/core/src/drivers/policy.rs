use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hfunc::HOracle;
use crate::Vector;

type Chooser = dyn Fn(&HOracle, &Vector) -> Result<Vector> + Send + Sync;

/// User-supplied subgradient chooser.
#[derive(Clone)]
pub struct CustomPolicy(pub Arc<Chooser>);

impl fmt::Debug for CustomPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPolicy")
    }
}

/// Which element of `∂h(x)` the DCA step (and the singleton selector) uses.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientPolicy {
    /// Gradient of the smallest-index active member.
    #[default]
    FirstActive,
    /// Mean of the active members' gradients.
    AverageActive,
    /// Gradient of the member picked by the maximizer / subgradient oracle.
    MaximizerOracle,
    #[serde(skip)]
    Custom(CustomPolicy),
}

impl SubgradientPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SubgradientPolicy::FirstActive => "first_active",
            SubgradientPolicy::AverageActive => "average_active",
            SubgradientPolicy::MaximizerOracle => "maximizer_oracle",
            SubgradientPolicy::Custom(_) => "custom",
        }
    }

    /// An element of `∂h(x)` chosen by this policy.
    pub fn subgradient(&self, h: &HOracle, x: &Vector) -> Result<Vector> {
        if let SubgradientPolicy::Custom(c) = self {
            let y = (c.0)(h, x)?;
            crate::ensure_finite(&y, "custom subgradient")?;
            return Ok(y);
        }
        let y = match h {
            HOracle::FiniteMax(fm) => {
                let active = fm.active_set(x, 0.0)?;
                match self {
                    SubgradientPolicy::AverageActive => {
                        let mut acc = Vector::zeros(x.len());
                        for &i in &active {
                            acc += fm.members()[i].grad(x);
                        }
                        acc / active.len() as f64
                    }
                    _ => fm.members()[*active.first().expect("M_0 is never empty")].grad(x),
                }
            }
            HOracle::ParamMax(pm) => {
                let t = pm.maximizer(x)?;
                pm.family.grad_x(x, &t)
            }
            HOracle::General(gh) => gh.subgrad(x)?,
        };
        crate::ensure_finite(&y, "subgradient")?;
        Ok(y)
    }
}
