//! Real and complex images on a regular pixel grid, plus the padding
//! helpers used to suppress periodic wrap-around of FFT-based operators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Physical meaning of the values stored in a [`RealImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Radians,
    #[default]
    Dimensionless,
}

/// A real-valued image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    ny: usize,
    nx: usize,
    data: Vec<f64>,
    unit: Unit,
}

fn check_shape(ny: usize, nx: usize) -> Result<()> {
    if ny == 0 || nx == 0 {
        return Err(Error::InvalidShape {
            ny,
            nx,
            reason: "dimensions must be positive",
        });
    }
    Ok(())
}

impl RealImage {
    /// Wraps `data`, rejecting wrong lengths and non-finite values.
    pub fn new(ny: usize, nx: usize, data: Vec<f64>, unit: Unit) -> Result<Self> {
        check_shape(ny, nx)?;
        if data.len() != ny * nx {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "data length does not match shape",
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "real image" });
        }
        Ok(Self { ny, nx, data, unit })
    }

    pub fn filled(ny: usize, nx: usize, value: f64, unit: Unit) -> Result<Self> {
        Self::new(ny, nx, vec![value; ny * nx], unit)
    }

    pub fn zeros(ny: usize, nx: usize, unit: Unit) -> Result<Self> {
        Self::filled(ny, nx, 0.0, unit)
    }

    /// Builds an image from a per-pixel function of `(row, column)`.
    pub fn from_fn(
        ny: usize,
        nx: usize,
        unit: Unit,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(y, x));
            }
        }
        Self::new(ny, nx, data, unit)
    }

    // Internal constructor for results of operators on already-validated input.
    pub(crate) fn from_raw(ny: usize, nx: usize, data: Vec<f64>, unit: Unit) -> Self {
        debug_assert_eq!(data.len(), ny * nx);
        Self { ny, nx, data, unit }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the pixels. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.nx + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Relative L2 distance `‖self − reference‖ / ‖reference‖`.
    pub fn relative_error(&self, reference: &RealImage) -> Result<f64> {
        ensure_same_shape(self.shape(), reference.shape())?;
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(diff / reference.norm())
    }

    /// Relative L2 distance after removing the best constant offset, i.e.
    /// `min_c ‖self − reference − c‖ / ‖reference‖`.
    ///
    /// For pure-phase data a global phase constant is not observable.
    pub fn relative_error_up_to_offset(&self, reference: &RealImage) -> Result<f64> {
        ensure_same_shape(self.shape(), reference.shape())?;
        let offset = self.mean() - reference.mean();
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b - offset).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(diff / reference.norm())
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            ny: self.ny,
            nx: self.nx,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// A complex-valued wave field stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    ny: usize,
    nx: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(ny: usize, nx: usize, data: Vec<Complex64>) -> Result<Self> {
        check_shape(ny, nx)?;
        if data.len() != ny * nx {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "data length does not match shape",
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "complex field",
            });
        }
        Ok(Self { ny, nx, data })
    }

    pub fn from_fn(
        ny: usize,
        nx: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(y, x));
            }
        }
        Self::new(ny, nx, data)
    }

    pub(crate) fn from_raw(ny: usize, nx: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), ny * nx);
        Self { ny, nx, data }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Complex inner product `Σ a·conj(b)`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum())
    }
}

pub(crate) fn ensure_same_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the border region of a padded image is filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PadMode {
    ReplicateEdge,
    Constant(f64),
}

/// Padding applied before propagation-based operations.
///
/// `factor = 1` disables padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Padding {
    pub factor: f64,
    pub mode: PadMode,
}

impl Default for Padding {
    fn default() -> Self {
        Self {
            factor: 2.0,
            mode: PadMode::ReplicateEdge,
        }
    }
}

impl Padding {
    pub fn none() -> Self {
        Self {
            factor: 1.0,
            mode: PadMode::ReplicateEdge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor.is_finite() && self.factor >= 1.0) {
            return Err(invalid("padding.factor", "must be >= 1"));
        }
        if let PadMode::Constant(v) = self.mode {
            if !v.is_finite() {
                return Err(invalid("padding.mode", "constant must be finite"));
            }
        }
        Ok(())
    }

    /// Shape of the padded grid for an image of shape `(ny, nx)`.
    pub fn padded_shape(&self, ny: usize, nx: usize) -> (usize, usize) {
        let grow = |n: usize| ((n as f64 * self.factor).round() as usize).max(n);
        (grow(ny), grow(nx))
    }

    pub fn is_identity(&self) -> bool {
        self.factor == 1.0
    }
}

/// Location of an unpadded image inside its padded grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub y0: usize,
    pub x0: usize,
    pub ny: usize,
    pub nx: usize,
}

impl Window {
    pub fn full(ny: usize, nx: usize) -> Self {
        Self { y0: 0, x0: 0, ny, nx }
    }

    /// The window that centers an `inner` shape inside an `outer` shape.
    pub fn centered(outer: (usize, usize), inner: (usize, usize)) -> Self {
        Self {
            y0: (outer.0 - inner.0) / 2,
            x0: (outer.1 - inner.1) / 2,
            ny: inner.0,
            nx: inner.1,
        }
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y0 && y < self.y0 + self.ny && x >= self.x0 && x < self.x0 + self.nx
    }
}

/// Pads `img` by `factor` per axis, keeping the original content centered.
pub fn pad_image(img: &RealImage, factor: f64, mode: PadMode) -> Result<RealImage> {
    let padding = Padding { factor, mode };
    padding.validate()?;
    let (py, px) = padding.padded_shape(img.ny, img.nx);
    let win = Window::centered((py, px), img.shape());
    let mut out = Vec::with_capacity(py * px);
    for y in 0..py {
        for x in 0..px {
            let v = match mode {
                PadMode::Constant(c) if !win.contains(y, x) => c,
                _ => {
                    let sy = y.saturating_sub(win.y0).min(img.ny - 1);
                    let sx = x.saturating_sub(win.x0).min(img.nx - 1);
                    img.get(sy, sx)
                }
            };
            out.push(v);
        }
    }
    Ok(RealImage::from_raw(py, px, out, img.unit))
}

/// Extracts the centered region of shape `original` from a padded image.
pub fn crop_image(img: &RealImage, original: (usize, usize)) -> Result<RealImage> {
    let (oy, ox) = original;
    check_shape(oy, ox)?;
    if oy > img.ny || ox > img.nx {
        return Err(Error::InvalidShape {
            ny: oy,
            nx: ox,
            reason: "crop shape exceeds image",
        });
    }
    let win = Window::centered(img.shape(), original);
    let mut out = Vec::with_capacity(oy * ox);
    for y in 0..oy {
        let row = (win.y0 + y) * img.nx + win.x0;
        out.extend_from_slice(&img.data[row..row + ox]);
    }
    Ok(RealImage::from_raw(oy, ox, out, img.unit))
}
