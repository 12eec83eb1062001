//! Points of the phase space `R^n x R^n`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A point `(x, xi)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        check_dim(x.len(), xi.len())?;
        if x.is_empty() {
            return Err(Error::Input("phase point must have dimension >= 1".into()));
        }
        if x.iter().chain(&xi).any(|v| !v.is_finite()) {
            return Err(Error::Input("phase point has non-finite entries".into()));
        }
        Ok(Self { x, xi })
    }

    /// One-dimensional shorthand.
    pub fn new1(x: f64, xi: f64) -> Self {
        Self {
            x: vec![x],
            xi: vec![xi],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Packs into a state vector `[x..., xi...]`.
    pub fn to_state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.dim());
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.xi);
        s
    }

    pub fn from_state(state: &[f64]) -> Self {
        let n = state.len() / 2;
        Self {
            x: state[..n].to_vec(),
            xi: state[n..].to_vec(),
        }
    }

    /// The antipode `(-x, -xi)`.
    pub fn antipode(&self) -> Self {
        Self {
            x: self.x.iter().map(|v| -v).collect(),
            xi: self.xi.iter().map(|v| -v).collect(),
        }
    }

    /// Momentum dilation `(x, xi) -> (x, lambda xi)`.
    pub fn scale_momentum(&self, lambda: f64) -> Self {
        Self {
            x: self.x.clone(),
            xi: self.xi.iter().map(|v| lambda * v).collect(),
        }
    }

    /// Euclidean distance in `R^{2n}`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Max-norm distance in `R^{2n}`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn position_norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn momentum_norm(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.position_norm().powi(2) + self.momentum_norm().powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.xi).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_round_trip_and_antipode() {
        let p = PhasePoint::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(PhasePoint::from_state(&p.to_state()), p);
        assert_eq!(p.antipode().antipode(), p);
        assert_eq!(p.scale_momentum(2.0).xi, vec![6.0, 8.0]);
        assert!((p.distance(&p.antipode()) - 2.0 * p.norm()).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(PhasePoint::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PhasePoint::new(vec![f64::NAN], vec![1.0]).is_err());
    }
}
