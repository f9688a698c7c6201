//! Three-spring optoelectronic force/torque sensor.
//!
//! Geometry: three identical springs of stiffness `k` sit at radius `d`
//! from the sensor axis, 120° apart at 90°, 210° and 330° from +x. Spring 1
//! therefore has the full moment arm `d` about x and none about y, while
//! springs 2 and 3 carry `d/2` about x and `√3·d/2` about y. Positive
//! deflection is elongation. Each photo sensor sits diametrically opposite
//! its spring, so it reads the negated deflection.
//!
//! The sensor only resolves `Fz`, `Mx` and `My`; there are no in-plane
//! inputs.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::Clamped;

/// Fixed spring layout, degrees from +x.
pub const SPRING_ANGLES_DEG: [f64; 3] = [90.0, 210.0, 330.0];

/// Outer diameter of the sensor body, mm. Documentation only.
pub const OUTER_DIAMETER_MM: f64 = 40.0;
/// Sensor height, mm. Documentation only.
pub const HEIGHT_MM: f64 = 28.0;
/// Diameter of the through hole for the instrument cables, mm. Documentation only.
pub const THROUGH_HOLE_DIAMETER_MM: f64 = 8.5;

/// Stainless spring stiffness of the reference build, N/mm.
pub const REFERENCE_STIFFNESS: f64 = 0.196;
/// Spring radius of the reference build, mm.
pub const REFERENCE_RADIUS: f64 = 16.0;
/// Default deflection clamp, mm.
///
/// The real travel budget between the plates is not known; this value is a
/// configurable placeholder.
pub const DEFAULT_DEFLECTION_LIMIT: f64 = 5.6;

#[derive(Debug, Error, PartialEq)]
pub enum SensorError {
    #[error("invalid sensor parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("compliance matrix is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    k: f64,
    d: f64,
    deflection_limit: f64,
}

impl SensorParams {
    pub fn new(k: f64, d: f64, deflection_limit: f64) -> Result<Self, SensorError> {
        check_positive("k", k)?;
        check_positive("d", d)?;
        check_positive("deflection_limit", deflection_limit)?;
        Ok(SensorParams { k, d, deflection_limit })
    }

    /// Like [`SensorParams::new`] but also checks a caller-supplied spring
    /// layout against the only supported one.
    pub fn with_layout(
        k: f64,
        d: f64,
        deflection_limit: f64,
        spring_angles_deg: [f64; 3],
    ) -> Result<Self, SensorError> {
        if spring_angles_deg != SPRING_ANGLES_DEG {
            return Err(SensorError::InvalidParams {
                field: "spring_angles",
                reason: format!(
                    "layout {spring_angles_deg:?} is not supported, expected {SPRING_ANGLES_DEG:?}"
                ),
            });
        }
        Self::new(k, d, deflection_limit)
    }

    /// Reference build: k = 0.196 N/mm, d = 16 mm.
    pub fn reference() -> Self {
        SensorParams {
            k: REFERENCE_STIFFNESS,
            d: REFERENCE_RADIUS,
            deflection_limit: DEFAULT_DEFLECTION_LIMIT,
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn deflection_limit(&self) -> f64 {
        self.deflection_limit
    }

    pub fn spring_angles_deg(&self) -> [f64; 3] {
        SPRING_ANGLES_DEG
    }

    /// Per-axis half-ranges of a box of wrenches that can never saturate a
    /// spring. Each load component alone uses at most a third of the travel
    /// of the spring it loads hardest.
    pub fn unsaturated_range(&self) -> Wrench3 {
        let budget = self.deflection_limit / 3.0;
        Wrench3 {
            fz: budget * 3.0 * self.k,
            mx: budget * 1.5 * self.k * self.d,
            my: budget * 3.0_f64.sqrt() * self.k * self.d,
        }
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<(), SensorError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SensorError::InvalidParams { field, reason: format!("must be finite and > 0, got {v}") })
    }
}

/// Load on the sensor: force along z (N) and moments about x and y (N·mm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench3 {
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
}

impl Wrench3 {
    pub const ZERO: Wrench3 = Wrench3 { fz: 0.0, mx: 0.0, my: 0.0 };

    pub fn new(fz: f64, mx: f64, my: f64) -> Self {
        Wrench3 { fz, mx, my }
    }

    pub fn is_finite(&self) -> bool {
        self.fz.is_finite() && self.mx.is_finite() && self.my.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.fz, self.mx, self.my)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Wrench3 { fz: v[0], mx: v[1], my: v[2] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.fz, self.mx, self.my]
    }

    pub fn scale(self, s: f64) -> Self {
        Wrench3 { fz: self.fz * s, mx: self.mx * s, my: self.my * s }
    }
}

/// Spring deflections, mm, positive = elongation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpringDeflections {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl SpringDeflections {
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.d1, self.d2, self.d3)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        SpringDeflections { d1: v[0], d2: v[1], d3: v[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.d1.is_finite() && self.d2.is_finite() && self.d3.is_finite()
    }
}

/// Photo-sensor displacement readings, mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhotoReadings {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PhotoReadings {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        PhotoReadings { a, b, c }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        PhotoReadings { a: v[0], b: v[1], c: v[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// Single-load deflection components, one row per load axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionBreakdown {
    pub from_fz: SpringDeflections,
    pub from_mx: SpringDeflections,
    pub from_my: SpringDeflections,
}

impl DeflectionBreakdown {
    pub fn total(&self) -> SpringDeflections {
        SpringDeflections::from_vector(
            self.from_fz.to_vector() + self.from_mx.to_vector() + self.from_my.to_vector(),
        )
    }
}

/// Splits a wrench into the deflection each load component causes on its own.
pub fn deflection_breakdown(w: Wrench3, p: &SensorParams) -> DeflectionBreakdown {
    let (k, d) = (p.k, p.d);
    let fz = w.fz / (3.0 * k);
    let mx = w.mx / (3.0 * k * d);
    let my = w.my / (3.0_f64.sqrt() * k * d);
    DeflectionBreakdown {
        from_fz: SpringDeflections { d1: fz, d2: fz, d3: fz },
        from_mx: SpringDeflections { d1: 2.0 * mx, d2: -mx, d3: -mx },
        from_my: SpringDeflections { d1: 0.0, d2: my, d3: -my },
    }
}

/// Superposed spring deflections under `w`, clamped to the deflection limit.
pub fn forward_deflections(
    w: Wrench3,
    p: &SensorParams,
) -> Result<Clamped<SpringDeflections>, SensorError> {
    if !w.is_finite() {
        return Err(SensorError::InvalidInput(format!("non-finite wrench {w:?}")));
    }
    let raw = deflection_breakdown(w, p).total();
    let lim = p.deflection_limit;
    let saturated = [raw.d1, raw.d2, raw.d3].iter().any(|v| v.abs() > lim);
    Ok(Clamped::new(
        SpringDeflections {
            d1: raw.d1.clamp(-lim, lim),
            d2: raw.d2.clamp(-lim, lim),
            d3: raw.d3.clamp(-lim, lim),
        },
        saturated,
    ))
}

/// Additive Gaussian noise followed by uniform quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotoNoiseModel {
    pub sigma: f64,
    pub quantization_step: f64,
    pub seed: u64,
}

impl PhotoNoiseModel {
    pub fn new(sigma: f64, quantization_step: f64, seed: u64) -> Result<Self, SensorError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SensorError::InvalidParams {
                field: "sigma",
                reason: format!("must be finite and >= 0, got {sigma}"),
            });
        }
        if !(quantization_step.is_finite() && quantization_step >= 0.0) {
            return Err(SensorError::InvalidParams {
                field: "quantization_step",
                reason: format!("must be finite and >= 0, got {quantization_step}"),
            });
        }
        Ok(PhotoNoiseModel { sigma, quantization_step, seed })
    }

    /// Starts a fresh noise stream for this model.
    pub fn source(&self) -> PhotoNoise {
        PhotoNoise { model: *self, rng: ChaCha8Rng::seed_from_u64(self.seed) }
    }
}

/// Stateful noise stream. Not meant to be shared between threads.
#[derive(Debug, Clone)]
pub struct PhotoNoise {
    model: PhotoNoiseModel,
    rng: ChaCha8Rng,
}

impl PhotoNoise {
    pub fn model(&self) -> &PhotoNoiseModel {
        &self.model
    }

    fn perturb(&mut self, clean: f64) -> f64 {
        // Always draw so the stream position does not depend on sigma.
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let noisy = clean + self.model.sigma * z;
        quantize(noisy, self.model.quantization_step)
    }
}

fn quantize(v: f64, step: f64) -> f64 {
    if step > 0.0 {
        (v / step).round() * step + 0.0
    } else {
        v
    }
}

/// Photo readings for the given deflections, optionally corrupted by noise.
pub fn photo_from_springs(s: SpringDeflections, noise: Option<&mut PhotoNoise>) -> PhotoReadings {
    // `0.0 - x` keeps an unloaded spring at +0.0 rather than -0.0.
    let clean = PhotoReadings { a: 0.0 - s.d1, b: 0.0 - s.d2, c: 0.0 - s.d3 };
    match noise {
        None => clean,
        Some(n) => PhotoReadings { a: n.perturb(clean.a), b: n.perturb(clean.b), c: n.perturb(clean.c) },
    }
}

/// Compliance matrix `C` with `readings = -C · wrench`.
pub fn compliance_matrix(p: &SensorParams) -> Matrix3<f64> {
    let (k, d) = (p.k, p.d);
    let a = 1.0 / (3.0 * k);
    let b = 1.0 / (3.0 * k * d);
    let c = 1.0 / (3.0_f64.sqrt() * k * d);
    Matrix3::new(
        a, 2.0 * b, 0.0, //
        a, -b, c, //
        a, -b, -c,
    )
}

/// Linear map from photo readings to wrench: `wrench = m · readings`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationMatrix {
    m: Matrix3<f64>,
}

impl CalibrationMatrix {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, SensorError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SensorError::InvalidInput("calibration matrix has non-finite entries".into()));
        }
        let cal = CalibrationMatrix { m };
        if !cal.condition_number().is_finite() {
            return Err(SensorError::Singular);
        }
        Ok(cal)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// The matrix with its leading minus sign pulled out, i.e. `-m`. This is
    /// the form usually tabulated: `wrench = -(printed) · readings`.
    pub fn printed_form(&self) -> Matrix3<f64> {
        -self.m
    }

    /// 2-norm condition number; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        let sv = self.m.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min <= max * f64::EPSILON {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// True when the Fz row has three equal entries within `tol`.
    pub fn fz_row_uniform(&self, tol: f64) -> bool {
        let r = self.m.row(0);
        (r[0] - r[1]).abs() <= tol && (r[0] - r[2]).abs() <= tol
    }
}

/// Analytic calibration `m = -C⁻¹`.
pub fn calibration_matrix(p: &SensorParams) -> Result<CalibrationMatrix, SensorError> {
    let c = compliance_matrix(p);
    let inv = c.try_inverse().ok_or(SensorError::Singular)?;
    CalibrationMatrix::from_matrix(-inv)
}

pub fn estimate_wrench(r: PhotoReadings, cal: &CalibrationMatrix) -> Wrench3 {
    Wrench3::from_vector(cal.m * r.to_vector())
}
