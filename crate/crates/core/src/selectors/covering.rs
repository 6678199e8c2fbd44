//! ε-nets of Euclidean balls.

use crate::error::{Result, SolverError};
use crate::hfunc::Ball;
use crate::Vector;

const MAX_CENTERS: f64 = 1e6;
const MAX_DIM: usize = 6;

/// Centers of `ε`-balls whose union contains `ball`.
#[derive(Clone, Debug)]
pub struct Covering {
    pub centers: Vec<Vector>,
    pub radius: f64,
    pub ball: Ball,
}

impl Covering {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `(4R/ε)^N`, the classical upper bound on the covering number.
    pub fn count_bound(&self) -> f64 {
        let n = self.ball.dim() as f64;
        (n * (4.0 * self.ball.radius / self.radius).ln()).exp()
    }

    pub fn nearest_distance(&self, p: &Vector) -> f64 {
        self.centers.iter().map(|c| (p - c).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned grid of spacing `2ε/√N` anchored at the center, keeping every
/// node whose grid cell meets the ball. Each cell has half-diagonal `ε`, so
/// every point of the ball lies within `ε` of a kept node.
pub fn cover_ball(center: &Vector, radius: f64, eps: f64) -> Result<Covering> {
    let n = center.len();
    if n == 0 || n > MAX_DIM {
        return Err(SolverError::InvalidConfig(format!("covering dimension must be in 1..={MAX_DIM}, got {n}")));
    }
    if !(radius > 0.0) || !(eps > 0.0) || eps > 2.0 * radius {
        return Err(SolverError::InvalidConfig(format!(
            "covering needs 0 < eps ≤ 2R (eps = {eps}, R = {radius})"
        )));
    }
    let spacing = 2.0 * eps / (n as f64).sqrt();
    let half = 0.5 * spacing;
    let reach = ((radius + half) / spacing).ceil() as i64;
    let side = (2 * reach + 1) as f64;
    let predicted = side.powi(n as i32);
    if predicted > MAX_CENTERS {
        return Err(SolverError::TooManyCenters { predicted });
    }
    let side = side as i64;
    let total = side.pow(n as u32);
    let slack = 1e-12 * (1.0 + radius);
    let mut centers = Vec::new();
    let mut offset = vec![0i64; n];
    for flat in 0..total {
        let mut rem = flat;
        for o in offset.iter_mut() {
            *o = rem % side - reach;
            rem /= side;
        }
        // distance from the ball center to the node's cell
        let d2: f64 = offset
            .iter()
            .map(|&j| {
                let gap = (j as f64 * spacing).abs() - half;
                if gap > 0.0 {
                    gap * gap
                } else {
                    0.0
                }
            })
            .sum();
        if d2.sqrt() <= radius + slack {
            let node = Vector::from_iterator(n, offset.iter().zip(center.iter()).map(|(&j, &c)| c + j as f64 * spacing));
            centers.push(node);
        }
    }
    Ok(Covering { centers, radius: eps, ball: Ball { center: center.clone(), radius } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn one_dimensional_examples() {
        let c = cover_ball(&dvector![0.0], 1.0, 0.5).unwrap();
        let mut pts: Vec<f64> = c.centers.iter().map(|v| v[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![-1.0, 0.0, 1.0]);
        assert!(c.len() as f64 <= c.count_bound());

        let c = cover_ball(&dvector![0.0], 1.0, 2.0).unwrap();
        assert_eq!(c.centers, vec![dvector![0.0]]);
    }

    #[test]
    fn planar_unit_disk() {
        let c = cover_ball(&dvector![0.0, 0.0], 1.0, 1.0).unwrap();
        assert!(c.len() <= 16);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(cover_ball(&dvector![0.0], 1.0, 3.0).is_err());
        assert!(cover_ball(&dvector![0.0], 1.0, 0.0).is_err());
        assert!(cover_ball(&Vector::zeros(7), 1.0, 0.5).is_err());
    }

    #[test]
    fn too_many_centers() {
        assert!(matches!(
            cover_ball(&Vector::zeros(6), 1.0, 1e-3),
            Err(SolverError::TooManyCenters { .. })
        ));
    }
}
