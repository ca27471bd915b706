use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Pointwise activation applied to every unit's net input.
///
/// Every variant satisfies `σ(0) = 0`. Both current variants also have unit
/// slope at the origin, which is what makes [`crate::transforms::linearize`]
/// well posed for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn value(self, phi: f64) -> f64 {
        match self {
            Activation::Tanh => phi.tanh(),
            Activation::Identity => phi,
        }
    }

    #[inline]
    pub fn derivative(self, phi: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = phi.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// True iff `σ(0) = 0` and `σ'(0) = 1`.
    pub fn is_linearizable(self) -> bool {
        self.value(0.0) == 0.0 && self.derivative(0.0) == 1.0
    }

    pub fn apply(self, phi: &DVector<f64>) -> DVector<f64> {
        phi.map(|p| self.value(p))
    }

    pub fn apply_derivative(self, phi: &DVector<f64>) -> DVector<f64> {
        phi.map(|p| self.derivative(p))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    // Reference values from an arbitrary-precision evaluation of tanh.
    const TANH_1: f64 = 0.761_594_155_955_764_888_12;
    const SECH2_1: f64 = 0.419_974_341_614_026_069_39;

    #[test]
    fn zero_maps_to_zero() {
        for kind in [Activation::Tanh, Activation::Identity] {
            assert_eq!(kind.value(0.0), 0.0);
            assert_eq!(kind.apply(&DVector::zeros(4)), DVector::zeros(4));
            assert_eq!(kind.derivative(0.0), 1.0);
            assert!(kind.is_linearizable());
        }
    }

    #[test]
    fn tanh_matches_reference() {
        let out = Activation::Tanh.apply(&dvector![1.0]);
        assert!((out[0] - TANH_1).abs() <= f64::EPSILON);
        let d = Activation::Tanh.apply_derivative(&dvector![1.0]);
        assert!((d[0] - SECH2_1).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn identity_is_passthrough() {
        let phi = dvector![3.5, -2.0];
        assert_eq!(Activation::Identity.apply(&phi), phi);
        assert_eq!(
            Activation::Identity.apply_derivative(&dvector![7.0, -1e9, 0.0]),
            DVector::from_element(3, 1.0)
        );
    }
}
