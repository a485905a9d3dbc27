//! Huber regularization of the Euclidean norm on R².
//!
//! `phi` is quadratic on the closed ball of radius `tau` and equal to `|v| - tau/2`
//! outside. Points with `|v| == tau` take the quadratic branch; both branches
//! agree there in value and first derivative.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("Huber parameter must be positive and finite, got {0}")]
pub struct InvalidTau(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HuberParam(f64);

impl HuberParam {
    pub fn new(tau: f64) -> Result<Self, InvalidTau> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(InvalidTau(tau))
        }
    }

    pub fn tau(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn phi(self, v: &Vector2<f64>) -> f64 {
        phi(v, self.0)
    }

    #[inline]
    pub fn dphi(self, v: &Vector2<f64>) -> Vector2<f64> {
        dphi(v, self.0)
    }

    #[inline]
    pub fn d2phi(self, v: &Vector2<f64>) -> Matrix2<f64> {
        d2phi(v, self.0)
    }
}

#[inline]
pub fn phi(v: &Vector2<f64>, tau: f64) -> f64 {
    let r = v.norm();
    if r > tau {
        r - 0.5 * tau
    } else {
        r * r / (2.0 * tau)
    }
}

#[inline]
pub fn dphi(v: &Vector2<f64>, tau: f64) -> Vector2<f64> {
    let r = v.norm();
    if r > tau {
        v / r
    } else {
        v / tau
    }
}

#[inline]
pub fn d2phi(v: &Vector2<f64>, tau: f64) -> Matrix2<f64> {
    let r = v.norm();
    if r > tau {
        let unit = v / r;
        (Matrix2::identity() - unit * unit.transpose()) / r
    } else {
        Matrix2::identity() / tau
    }
}
