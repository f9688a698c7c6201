//! Least-squares calibration of the F/T sensor and its accuracy metric.
//!
//! Accuracy is a full-scale-normalised mean absolute error:
//! `100 · (1 - mean(|estimate - truth|) / full_scale)` per axis, averaged
//! over the three axes for the overall figure. The default full scale
//! (Fz = 5 N, Mx = My = 80 N·mm) is a project choice, not a measured rating.

use std::io::{Read, Write};

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::{
    estimate_wrench, forward_deflections, photo_from_springs, CalibrationMatrix, PhotoNoiseModel,
    PhotoReadings, SensorError, SensorParams, Wrench3,
};

/// Column header of the calibration sample CSV.
pub const CSV_HEADER: [&str; 6] = ["dA_mm", "dB_mm", "dC_mm", "Fz_N", "Mx_Nmm", "My_Nmm"];

/// Default normalisation for the accuracy metric.
pub const DEFAULT_FULL_SCALE: Wrench3 = Wrench3 { fz: 5.0, mx: 80.0, my: 80.0 };

/// Relative eigenvalue floor of `XᵀX` below which a readings direction counts
/// as unexcited (singular-value ratio of 1e-6).
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(
        "degenerate calibration data: readings span rank {rank} < 3; unexcited direction (dA, dB, dC) = ({:.6}, {:.6}, {:.6})",
        direction[0], direction[1], direction[2]
    )]
    Degenerate { rank: usize, direction: [f64; 3] },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header mismatch: expected {expected}, found {found}")]
    Header { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub readings: PhotoReadings,
    pub true_wrench: Wrench3,
}

impl CalibrationSample {
    pub fn is_finite(&self) -> bool {
        self.readings.is_finite() && self.true_wrench.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationFit {
    pub matrix: CalibrationMatrix,
    /// Per-axis root-mean-square residual on the fitting data.
    pub residual_rms: Wrench3,
}

/// Ordinary least squares for `m` in `wrench ≈ m · readings`.
pub fn fit_calibration(samples: &[CalibrationSample]) -> Result<CalibrationFit, CalibrationError> {
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(CalibrationError::InvalidInput(format!("sample {i} has non-finite values")));
    }
    let n = samples.len();
    let x = DMatrix::from_fn(n, 3, |i, j| samples[i].readings.to_vector()[j]);
    let y = DMatrix::from_fn(n, 3, |i, j| samples[i].true_wrench.to_vector()[j]);

    check_rank(&x)?;

    let svd = x.clone().svd(true, true);
    let mt = svd
        .solve(&y, 0.0)
        .map_err(|e| CalibrationError::InvalidInput(format!("least-squares solve failed: {e}")))?;
    let m: Matrix3<f64> = Matrix3::from_fn(|i, j| mt[(j, i)]);
    let matrix = CalibrationMatrix::from_matrix(m)?;

    let resid = &x * &mt - &y;
    let rms = |j: usize| (resid.column(j).norm_squared() / n as f64).sqrt();
    Ok(CalibrationFit { matrix, residual_rms: Wrench3::new(rms(0), rms(1), rms(2)) })
}

fn check_rank(x: &DMatrix<f64>) -> Result<(), CalibrationError> {
    let gram: Matrix3<f64> = {
        let g = x.transpose() * x;
        Matrix3::from_fn(|i, j| g[(i, j)])
    };
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.max();
    let floor = RANK_TOLERANCE * max;
    let rank = if max <= 0.0 {
        0
    } else {
        eig.eigenvalues.iter().filter(|&&l| l > floor).count()
    };
    if rank == 3 {
        return Ok(());
    }
    let imin = eig.eigenvalues.imin();
    let mut dir = eig.eigenvectors.column(imin).into_owned();
    // Sign-normalise so the reported direction is stable.
    if let Some(first) = dir.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            dir = -dir;
        }
    }
    Err(CalibrationError::Degenerate { rank, direction: [dir[0], dir[1], dir[2]] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReport {
    /// Fz, Mx, My accuracy in percent.
    pub per_axis_accuracy: [f64; 3],
    pub overall_accuracy: f64,
    /// Fz in N, Mx and My in N·mm.
    pub per_axis_rmse: [f64; 3],
    pub full_scale: [f64; 3],
    pub sample_count: usize,
    /// Set when an axis accuracy fell below zero; values are reported unclamped.
    pub below_zero: bool,
}

pub fn accuracy_report(
    cal: &CalibrationMatrix,
    samples: &[CalibrationSample],
    full_scale: Wrench3,
) -> Result<AccuracyReport, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::InvalidInput("accuracy needs at least one sample".into()));
    }
    let fs = full_scale.to_array();
    if let Some(i) = fs.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        let axis = ["Fz", "Mx", "My"][i];
        return Err(CalibrationError::InvalidInput(format!(
            "full scale {axis} must be finite and > 0, got {}",
            fs[i]
        )));
    }
    let n = samples.len() as f64;
    let mut abs_sum = [0.0; 3];
    let mut sq_sum = [0.0; 3];
    for s in samples {
        let est = estimate_wrench(s.readings, cal).to_array();
        let truth = s.true_wrench.to_array();
        for j in 0..3 {
            let e = est[j] - truth[j];
            abs_sum[j] += e.abs();
            sq_sum[j] += e * e;
        }
    }
    let per_axis_accuracy: [f64; 3] = std::array::from_fn(|j| 100.0 * (1.0 - abs_sum[j] / n / fs[j]));
    let per_axis_rmse: [f64; 3] = std::array::from_fn(|j| (sq_sum[j] / n).sqrt());
    Ok(AccuracyReport {
        per_axis_accuracy,
        overall_accuracy: per_axis_accuracy.iter().sum::<f64>() / 3.0,
        per_axis_rmse,
        full_scale: fs,
        sample_count: samples.len(),
        below_zero: per_axis_accuracy.iter().any(|a| *a < 0.0),
    })
}

/// Offset between the wrench stream seed and the noise stream seed.
const NOISE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Random wrenches drawn uniformly from [`SensorParams::unsaturated_range`],
/// pushed through the forward model and an optional noise stage.
pub fn synthesize_samples(
    params: &SensorParams,
    n: usize,
    sigma: f64,
    quantization_step: f64,
    seed: u64,
) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let noise_model = PhotoNoiseModel::new(sigma, quantization_step, seed ^ NOISE_SEED_SALT)?;
    let mut noise = noise_model.source();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = params.unsaturated_range();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = Wrench3::new(
            rng.random_range(-range.fz..=range.fz),
            rng.random_range(-range.mx..=range.mx),
            rng.random_range(-range.my..=range.my),
        );
        let springs = forward_deflections(w, params)?.value;
        let readings = photo_from_springs(springs, Some(&mut noise));
        out.push(CalibrationSample { readings, true_wrench: w });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(rename = "dA_mm")]
    da: f64,
    #[serde(rename = "dB_mm")]
    db: f64,
    #[serde(rename = "dC_mm")]
    dc: f64,
    #[serde(rename = "Fz_N")]
    fz: f64,
    #[serde(rename = "Mx_Nmm")]
    mx: f64,
    #[serde(rename = "My_Nmm")]
    my: f64,
}

pub fn write_samples_csv<W: Write>(out: W, samples: &[CalibrationSample]) -> Result<(), CalibrationError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in samples {
        w.serialize(CsvRow {
            da: s.readings.a,
            db: s.readings.b,
            dc: s.readings.c,
            fz: s.true_wrench.fz,
            mx: s.true_wrench.mx,
            my: s.true_wrench.my,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CalibrationError::Header {
            expected: CSV_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut samples = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row?;
        let s = CalibrationSample {
            readings: PhotoReadings::new(row.da, row.db, row.dc),
            true_wrench: Wrench3::new(row.fz, row.mx, row.my),
        };
        if !s.is_finite() {
            return Err(CalibrationError::InvalidInput(format!(
                "row {} has non-finite values",
                samples.len() + 1
            )));
        }
        samples.push(s);
    }
    Ok(samples)
}

/// Settings for locating the photo-noise level that yields a target accuracy.
#[derive(Debug, Clone)]
pub struct SigmaSweep {
    pub params: SensorParams,
    pub seeds: Vec<u64>,
    pub samples_per_seed: usize,
    pub full_scale: Wrench3,
    pub target_accuracy: f64,
    /// Upper end of the bracket, mm.
    pub sigma_max: f64,
    pub iterations: usize,
}

impl SigmaSweep {
    pub fn new(params: SensorParams, seeds: Vec<u64>) -> Self {
        SigmaSweep {
            params,
            seeds,
            samples_per_seed: 200,
            full_scale: DEFAULT_FULL_SCALE,
            target_accuracy: 95.0,
            sigma_max: 10.0,
            iterations: 40,
        }
    }

    /// Mean over seeds of the in-sample overall accuracy of a calibration
    /// fitted to noisy samples at `sigma`.
    pub fn mean_accuracy(&self, sigma: f64) -> Result<f64, CalibrationError> {
        if self.seeds.is_empty() {
            return Err(CalibrationError::InvalidInput("sweep needs at least one seed".into()));
        }
        let mut total = 0.0;
        for &seed in &self.seeds {
            let samples = synthesize_samples(&self.params, self.samples_per_seed, sigma, 0.0, seed)?;
            let fit = fit_calibration(&samples)?;
            total += accuracy_report(&fit.matrix, &samples, self.full_scale)?.overall_accuracy;
        }
        Ok(total / self.seeds.len() as f64)
    }

    /// Bisects on sigma for the target accuracy.
    pub fn run(&self) -> Result<SweepResult, CalibrationError> {
        let (mut lo, mut hi) = (0.0, self.sigma_max);
        if self.mean_accuracy(hi)? > self.target_accuracy {
            return Err(CalibrationError::InvalidInput(format!(
                "accuracy stays above {} % up to sigma = {hi} mm",
                self.target_accuracy
            )));
        }
        for _ in 0..self.iterations {
            let mid = 0.5 * (lo + hi);
            if self.mean_accuracy(mid)? > self.target_accuracy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sigma = 0.5 * (lo + hi);
        Ok(SweepResult { sigma, mean_accuracy: self.mean_accuracy(sigma)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub sigma: f64,
    pub mean_accuracy: f64,
}
