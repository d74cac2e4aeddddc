//! Pointwise-separable convex constraint sets and their exact projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, RealImage, Window};

/// A binary support mask `Ω`; `true` marks pixels inside the support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    ny: usize,
    nx: usize,
    inside: Vec<bool>,
}

impl SupportMask {
    pub fn new(ny: usize, nx: usize, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != ny * nx || ny == 0 || nx == 0 {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "mask length does not match shape",
            });
        }
        Ok(Self { ny, nx, inside })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }
}

/// Closed interval constraint `lo ≤ φ ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: f64,
    pub hi: f64,
}

/// The feasible set `A` for the phase image.
///
/// Every member constraint acts on each pixel independently, so composing
/// support zeroing with clamping to `[lo, min(hi, 0 if negativity)]` is the
/// exact metric projection onto `A`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub negativity: bool,
    pub support: Option<SupportMask>,
    pub bounds: Option<BoxBounds>,
    /// Region of a (padded) grid the constraints act on; `None` = whole image.
    pub window: Option<Window>,
}

impl ConstraintSet {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn negativity() -> Self {
        Self {
            negativity: true,
            ..Self::default()
        }
    }

    pub fn with_support(mut self, mask: SupportMask) -> Self {
        self.support = Some(mask);
        self
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some(BoxBounds { lo, hi });
        self
    }

    /// Restricts the constraints to `window` of a larger grid.
    pub fn within(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    pub fn is_unconstrained(&self) -> bool {
        !self.negativity && self.support.is_none() && self.bounds.is_none()
    }

    /// Checks that the described set is nonempty.
    pub fn validate(&self) -> Result<()> {
        if let Some(BoxBounds { lo, hi }) = self.bounds {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::InfeasibleConstraints("box bounds must not be NaN".into()));
            }
            if lo > hi {
                return Err(Error::InfeasibleConstraints(format!("box lower bound {lo} exceeds upper bound {hi}")));
            }
            if self.negativity && lo > 0.0 {
                return Err(Error::InfeasibleConstraints(format!(
                    "box lower bound {lo} is positive but negativity is required"
                )));
            }
            if self.support.is_some() && !(lo <= 0.0 && 0.0 <= hi) {
                return Err(Error::InfeasibleConstraints(format!(
                    "support requires 0 inside the box [{lo}, {hi}]"
                )));
            }
        }
        if let (Some(mask), Some(win)) = (&self.support, &self.window) {
            ensure_same_shape((win.ny, win.nx), mask.shape())?;
        }
        Ok(())
    }

    fn interval(&self) -> (f64, f64) {
        let (mut lo, mut hi) = match self.bounds {
            Some(b) => (b.lo, b.hi),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        if self.negativity {
            hi = hi.min(0.0);
        }
        lo = lo.min(hi);
        (lo, hi)
    }

    /// Projects a row-major `ny × nx` buffer onto the set, in place.
    pub fn project_in_place(&self, data: &mut [f64], ny: usize, nx: usize) -> Result<()> {
        if data.len() != ny * nx {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "buffer length does not match shape",
            });
        }
        if self.is_unconstrained() {
            return Ok(());
        }
        let win = self.window.unwrap_or(Window::full(ny, nx));
        if win.y0 + win.ny > ny || win.x0 + win.nx > nx {
            return Err(Error::ShapeMismatch {
                expected: (ny, nx),
                found: (win.y0 + win.ny, win.x0 + win.nx),
            });
        }
        if let Some(mask) = &self.support {
            ensure_same_shape((win.ny, win.nx), mask.shape())?;
        }
        let (lo, hi) = self.interval();
        for wy in 0..win.ny {
            let row = (win.y0 + wy) * nx + win.x0;
            for wx in 0..win.nx {
                let v = &mut data[row + wx];
                let outside = self
                    .support
                    .as_ref()
                    .is_some_and(|m| !m.inside[wy * win.nx + wx]);
                *v = if outside { 0.0 } else { v.clamp(lo, hi) };
            }
        }
        Ok(())
    }

    /// Returns `Π_A(φ)`.
    pub fn project(&self, phi: &RealImage) -> Result<RealImage> {
        self.validate()?;
        let mut out = phi.clone();
        let (ny, nx) = phi.shape();
        self.project_in_place(out.data_mut(), ny, nx)?;
        Ok(out)
    }

    /// Whether every pixel of `data` satisfies the constraints exactly.
    pub fn contains(&self, data: &[f64], ny: usize, nx: usize) -> bool {
        let mut copy = data.to_vec();
        self.project_in_place(&mut copy, ny, nx).is_ok() && copy == data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Unit;
    use proptest::prelude::*;

    fn img(values: &[f64]) -> RealImage {
        RealImage::new(1, values.len(), values.to_vec(), Unit::Radians).unwrap()
    }

    #[test]
    fn negativity_is_pointwise_minimum() {
        let out = ConstraintSet::negativity().project(&img(&[0.5, -0.3])).unwrap();
        assert_eq!(out.data(), &[0.0, -0.3]);
    }

    #[test]
    fn support_and_negativity() {
        let mask = SupportMask::new(1, 3, vec![false, true, true]).unwrap();
        let set = ConstraintSet::negativity().with_support(mask);
        let out = set.project(&img(&[2.0, 2.0, -1.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, -1.0]);

        // brute-force the closest feasible value per pixel on a fine 1-D grid
        for (i, &v) in [2.0, 2.0, -1.0].iter().enumerate() {
            let inside = i > 0;
            let best = (-4000..=4000)
                .map(|k| k as f64 * 1e-3)
                .filter(|&c| if inside { c <= 0.0 } else { c == 0.0 })
                .min_by(|a, b| (a - v).abs().partial_cmp(&(b - v).abs()).unwrap())
                .unwrap();
            assert!((best - out.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_combinations_rejected() {
        let mask = SupportMask::new(1, 1, vec![true]).unwrap();
        assert!(ConstraintSet::unconstrained().with_bounds(1.0, 0.0).validate().is_err());
        assert!(ConstraintSet::negativity().with_bounds(0.5, 1.0).validate().is_err());
        assert!(ConstraintSet::unconstrained()
            .with_support(mask.clone())
            .with_bounds(0.5, 1.0)
            .validate()
            .is_err());
        assert!(ConstraintSet::unconstrained()
            .with_support(mask)
            .with_bounds(-1.0, 1.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn window_limits_projection() {
        let set = ConstraintSet::negativity().within(Window { y0: 1, x0: 1, ny: 2, nx: 2 });
        let mut data = vec![1.0; 16];
        set.project_in_place(&mut data, 4, 4).unwrap();
        let zeros = data.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 4);
        assert_eq!(data[0], 1.0);
        assert_eq!(data[5], 0.0);
    }

    fn arb_set() -> impl Strategy<Value = ConstraintSet> {
        (any::<bool>(), proptest::option::of((-3.0f64..0.0, 0.0f64..3.0)), proptest::collection::vec(any::<bool>(), 16))
            .prop_map(|(neg, bounds, mask)| {
                let mut set = ConstraintSet { negativity: neg, ..Default::default() };
                if let Some((lo, hi)) = bounds {
                    set = set.with_bounds(lo, hi);
                }
                if mask[0] {
                    set = set.with_support(SupportMask::new(4, 4, mask).unwrap());
                }
                set
            })
    }

    proptest! {
        #[test]
        fn projection_properties(
            set in arb_set(),
            a in proptest::collection::vec(-5.0f64..5.0, 16),
            b in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            let pa = set.project(&RealImage::new(4, 4, a.clone(), Unit::Radians).unwrap()).unwrap();
            let pb = set.project(&RealImage::new(4, 4, b.clone(), Unit::Radians).unwrap()).unwrap();
            // idempotent and feasible
            prop_assert_eq!(&set.project(&pa).unwrap(), &pa);
            prop_assert!(set.contains(pa.data(), 4, 4));
            // non-expansive
            let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d_out: f64 = pa.data().iter().zip(pb.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
