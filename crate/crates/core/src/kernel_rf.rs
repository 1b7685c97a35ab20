//! Shift-invariant kernels and their random Fourier feature approximation.
//!
//! A standardized kernel `k̄(s - s')` with `k̄(0) = 1` is the characteristic
//! function of its spectral density, so drawing `D` frequencies from that
//! density and mapping a state to
//!
//! ```text
//! φ(s) = D^{-1/2} [sin(ζ₁ᵀs), cos(ζ₁ᵀs), …, sin(ζ_Dᵀs), cos(ζ_Dᵀs)]
//! ```
//!
//! gives `φ(s)ᵀφ(s') ≈ k̄(s, s')`. The full prior kernel is `σ_θ² k̄`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-‖Δ‖² / 2σ²)`, spectral density `N(0, σ⁻² I)`.
    Gaussian,
    /// `exp(-‖Δ‖₁ / σ)`, spectral density: per-coordinate Cauchy with scale `1/σ`.
    Laplace,
    /// `∏ⱼ 1 / (1 + Δⱼ²/σ²)`, spectral density: per-coordinate Laplace with scale `1/σ`.
    Cauchy,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
            KernelFamily::Cauchy => "cauchy",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    /// Prior variance `σ_θ² = κ(s, s)`.
    #[serde(default = "unit_magnitude")]
    pub magnitude: f64,
}

fn unit_magnitude() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, magnitude: f64) -> Result<Self> {
        let spec = KernelSpec {
            family,
            lengthscale,
            magnitude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, lengthscale, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel magnitude must be positive, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }

    /// Standardized kernel `k̄(s, s')`, equal to 1 on the diagonal.
    pub fn normalized(&self, s: &DVector<f64>, s_prime: &DVector<f64>) -> Result<f64> {
        check_dim("kernel arguments", s.len(), s_prime.len())?;
        let sigma = self.lengthscale;
        let diffs = s.iter().zip(s_prime.iter()).map(|(a, b)| a - b);
        let value = match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = diffs.map(|d| d * d).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
            KernelFamily::Laplace => {
                let l1: f64 = diffs.map(f64::abs).sum();
                (-l1 / sigma).exp()
            }
            KernelFamily::Cauchy => diffs
                .map(|d| 1.0 / (1.0 + (d / sigma) * (d / sigma)))
                .product(),
        };
        Ok(value)
    }

    /// `κ(s, s') = σ_θ² k̄(s, s')`.
    pub fn exact(&self, s: &DVector<f64>, s_prime: &DVector<f64>) -> Result<f64> {
        Ok(self.magnitude * self.normalized(s, s_prime)?)
    }

    /// Draw one frequency coordinate from this family's spectral density.
    fn draw_coordinate<R: RngCore>(&self, rng: &mut R) -> f64 {
        let scale = 1.0 / self.lengthscale;
        match self.family {
            KernelFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            }
            KernelFamily::Laplace => {
                // Cauchy inverse CDF
                let u = open_unit(rng);
                scale * (PI * (u - 0.5)).tan()
            }
            KernelFamily::Cauchy => {
                // Laplace inverse CDF
                let c = open_unit(rng) - 0.5;
                -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
            }
        }
    }
}

/// Uniform draw strictly inside (0, 1).
fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A frozen draw of `D` spectral frequencies. Frequencies are a pure
/// function of `(spec, D, d, seed)` and are never serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct RFMap {
    spec: KernelSpec,
    num_features: usize,
    state_dim: usize,
    seed: u64,
    /// `D × d`, row `i` is `ζ_i`.
    frequencies: DMatrix<f64>,
}

/// On-disk form of an [`RFMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RFMapSnapshot {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub magnitude: f64,
    pub num_features: usize,
    pub state_dim: usize,
    pub seed: u64,
}

/// Draw `num_features` frequency vectors of dimension `state_dim` from the
/// spectral density of `spec`.
pub fn sample_frequencies(
    spec: KernelSpec,
    num_features: usize,
    state_dim: usize,
    seed: u64,
) -> Result<RFMap> {
    spec.validate()?;
    if num_features == 0 {
        return Err(Error::invalid("number of random features must be >= 1"));
    }
    if state_dim == 0 {
        return Err(Error::invalid("state dimension must be >= 1"));
    }
    let mut rng = rng::stream(seed, Purpose::Frequencies, 0);
    // row-major fill so row i depends only on the first (i+1)·d draws
    let mut frequencies = DMatrix::zeros(num_features, state_dim);
    for i in 0..num_features {
        for j in 0..state_dim {
            frequencies[(i, j)] = spec.draw_coordinate(&mut rng);
        }
    }
    Ok(RFMap {
        spec,
        num_features,
        state_dim,
        seed,
        frequencies,
    })
}

impl RFMap {
    /// Build a map from explicit frequencies. Such a map cannot be restored
    /// from a snapshot; it exists for hand-checked cases.
    pub fn with_frequencies(spec: KernelSpec, frequencies: DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        if frequencies.nrows() == 0 || frequencies.ncols() == 0 {
            return Err(Error::invalid("frequency matrix must be non-empty"));
        }
        Ok(RFMap {
            spec,
            num_features: frequencies.nrows(),
            state_dim: frequencies.ncols(),
            seed: 0,
            frequencies,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Length of `φ(s)`, i.e. `2D`.
    pub fn feature_dim(&self) -> usize {
        2 * self.num_features
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn feature_map(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.feature_dim());
        self.feature_map_into(s, &mut out)?;
        Ok(out)
    }

    /// Interleaved `[sin, cos, …]` features written into `out`.
    pub fn feature_map_into(&self, s: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        check_dim("feature map input", self.state_dim, s.len())?;
        check_dim("feature map output", self.feature_dim(), out.len())?;
        let norm = 1.0 / (self.num_features as f64).sqrt();
        for i in 0..self.num_features {
            let mut proj = 0.0;
            for j in 0..self.state_dim {
                proj += self.frequencies[(i, j)] * s[j];
            }
            let (sin, cos) = proj.sin_cos();
            out[2 * i] = norm * sin;
            out[2 * i + 1] = norm * cos;
        }
        Ok(())
    }

    /// `φ(s)ᵀφ(s')`, the random-feature estimate of `k̄(s, s')`.
    pub fn approx_kernel(&self, s: &DVector<f64>, s_prime: &DVector<f64>) -> Result<f64> {
        Ok(self.feature_map(s)?.dot(&self.feature_map(s_prime)?))
    }

    /// Stack `φ(s)ᵀ` for each state as a row.
    pub fn feature_matrix(&self, states: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(states.len(), self.feature_dim());
        for (row, s) in states.iter().enumerate() {
            let f = self.feature_map(s)?;
            phi.row_mut(row).copy_from(&f.transpose());
        }
        Ok(phi)
    }

    pub fn snapshot(&self) -> RFMapSnapshot {
        RFMapSnapshot {
            family: self.spec.family,
            lengthscale: self.spec.lengthscale,
            magnitude: self.spec.magnitude,
            num_features: self.num_features,
            state_dim: self.state_dim,
            seed: self.seed,
        }
    }

    pub fn from_snapshot(snap: &RFMapSnapshot) -> Result<Self> {
        let spec = KernelSpec::new(snap.family, snap.lengthscale, snap.magnitude)?;
        sample_frequencies(spec, snap.num_features, snap.state_dim, snap.seed)
    }
}
