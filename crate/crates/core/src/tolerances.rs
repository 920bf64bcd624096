/// Numerical thresholds used by the pipeline. All values are relative to
/// the natural scale of the quantity they gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Fixed-point residual of the compatibility condition.
    pub fix: f64,
    /// Minimum eigenvalue of a normalized form, relative to the tuple norm.
    pub pd: f64,
    /// Singular-value cutoff for nullspace and rank decisions.
    pub null_rel: f64,
    /// Minimum singular value for a block to count as invertible.
    pub inv: f64,
    /// Radius of the eigenvalue cluster around 1 in the spectral analysis.
    pub cluster: f64,
    /// Acceptance threshold for intertwining and identity residuals.
    pub residual: f64,
    /// Relative magnitude below which the trace sums count as vanishing.
    pub trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fix: 1e-10,
            pd: 1e-9,
            null_rel: 1e-8,
            inv: 1e-8,
            cluster: 1e-6,
            residual: 1e-9,
            trace: 1e-7,
        }
    }
}

impl Tolerances {
    /// Defaults suited to the precision of `T`: the `f64` values, or a
    /// looser set when machine epsilon is above `1e-10`.
    pub fn for_scalar<T: crate::scalar::Real>() -> Self {
        if crate::scalar::to_f64(T::default_epsilon()) <= 1e-10 {
            return Self::default();
        }
        Self {
            fix: 1e-5,
            pd: 1e-5,
            null_rel: 1e-4,
            inv: 1e-4,
            cluster: 1e-3,
            residual: 1e-4,
            trace: 1e-3,
        }
    }

    /// Defaults with the residual acceptance threshold replaced.
    pub fn with_residual(residual: f64) -> Self {
        Self {
            residual,
            ..Self::default()
        }
    }
}
