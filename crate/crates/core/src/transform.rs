//! Variance-stabilising price transforms fitted on a calibration sample.
//!
//! `Asinh` standardises with the median and the median absolute deviation and
//! then applies the area hyperbolic sine, which tames price spikes and keeps
//! negative prices well defined. `ZScore` is plain mean/standard-deviation
//! normalisation. Both are strictly increasing and exactly invertible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

/// Scale floor used when a calibration sample has zero spread.
pub const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Asinh,
    ZScore,
    Identity,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("cannot fit a transform on an empty sample")]
    EmptySample,
}

/// Knobs for [`fit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    /// Multiplier on the MAD. 1.0 is the raw MAD; 1.4826 gives the
    /// normal-consistent version some forecasting studies use.
    pub mad_scale: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self { mad_scale: 1.0 }
    }
}

/// Location/scale pair plus the transform it parameterises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub kind: TransformKind,
    pub a: f64,
    pub b: f64,
    /// Set when the fitted scale was zero and got floored to [`SCALE_FLOOR`].
    pub degenerate: bool,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams {
        kind: TransformKind::Identity,
        a: 0.0,
        b: 1.0,
        degenerate: false,
    };

    pub fn apply(&self, x: f64) -> f64 {
        let z = (x - self.a) / self.b;
        match self.kind {
            TransformKind::Asinh => z.asinh(),
            TransformKind::ZScore | TransformKind::Identity => z,
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match self.kind {
            TransformKind::Asinh => self.b * y.sinh() + self.a,
            TransformKind::ZScore | TransformKind::Identity => self.b * y + self.a,
        }
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

pub fn fit(kind: TransformKind, values: &[f64]) -> Result<TransformParams, TransformError> {
    fit_with(kind, values, &TransformOptions::default())
}

pub fn fit_with(
    kind: TransformKind,
    values: &[f64],
    options: &TransformOptions,
) -> Result<TransformParams, TransformError> {
    if values.is_empty() {
        return Err(TransformError::EmptySample);
    }
    let (a, raw_b) = match kind {
        TransformKind::Asinh => (
            stats::median(values),
            options.mad_scale * stats::mad(values),
        ),
        TransformKind::ZScore => (stats::mean(values), stats::sample_std(values)),
        TransformKind::Identity => return Ok(TransformParams::IDENTITY),
    };
    let degenerate = !(raw_b > 0.0);
    if degenerate {
        log::debug!(
            "{kind:?} scale is zero on a sample of {}; flooring",
            values.len()
        );
    }
    Ok(TransformParams {
        kind,
        a,
        b: if degenerate { SCALE_FLOOR } else { raw_b },
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn asinh(a: f64, b: f64) -> TransformParams {
        TransformParams {
            kind: TransformKind::Asinh,
            a,
            b,
            degenerate: false,
        }
    }

    #[test]
    fn asinh_fit_uses_median_and_mad() {
        let p = fit(TransformKind::Asinh, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((p.a, p.b, p.degenerate), (3.0, 1.0, false));
    }

    #[test]
    fn mad_scale_knob_multiplies_scale() {
        let opts = TransformOptions { mad_scale: 1.4826 };
        let p = fit_with(TransformKind::Asinh, &[1.0, 2.0, 3.0, 4.0, 5.0], &opts).unwrap();
        assert!((p.b - 1.4826).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_is_floored_and_flagged() {
        let p = fit(TransformKind::ZScore, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(p.a, 2.0);
        assert_eq!(p.b, SCALE_FLOOR);
        assert!(p.degenerate);
    }

    #[test]
    fn identity_ignores_data() {
        let p = fit(TransformKind::Identity, &[10.0, -4.0]).unwrap();
        assert_eq!(p, TransformParams::IDENTITY);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert_eq!(
            fit(TransformKind::Asinh, &[]),
            Err(TransformError::EmptySample)
        );
    }

    #[test]
    fn apply_examples() {
        assert_eq!(asinh(3.0, 1.0).apply(3.0), 0.0);
        let x = 1f64.sinh();
        assert!((x - 1.175_201_193_643_801_4).abs() < 1e-15);
        assert!((asinh(0.0, 1.0).apply(x) - 1.0).abs() < 1e-15);
        let z = TransformParams {
            kind: TransformKind::ZScore,
            a: 10.0,
            b: 2.0,
            degenerate: false,
        };
        assert_eq!(z.apply(14.0), 2.0);
        assert_eq!(z.invert(2.0), 14.0);
        assert_eq!(asinh(3.0, 1.0).invert(0.0), 3.0);
    }

    #[test]
    fn round_trip_at_price_extremes() {
        for p in [asinh(40.0, 12.5), asinh(-3.0, 0.7)] {
            for x in [-500.0, 0.0, 3000.0] {
                let back = p.invert(p.apply(x));
                assert!(
                    (back - x).abs() <= 1e-10 * x.abs().max(1.0),
                    "{x} -> {back}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn transforms_are_strictly_increasing(
            a in -100.0f64..100.0, b in 0.01f64..100.0,
            x1 in -1000.0f64..3000.0, dx in 1e-3f64..100.0,
        ) {
            for kind in [TransformKind::Asinh, TransformKind::ZScore] {
                let p = TransformParams { kind, a, b, degenerate: false };
                prop_assert!(p.apply(x1) < p.apply(x1 + dx));
            }
        }

        #[test]
        fn asinh_compresses_tails(a in -100.0f64..100.0, b in 0.01f64..100.0, x in -1000.0f64..3000.0) {
            let z = (x - a) / b;
            prop_assert!(asinh(a, b).apply(x).abs() <= z.abs() + 1e-12);
        }
    }
}
