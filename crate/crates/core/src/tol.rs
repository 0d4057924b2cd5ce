//! Numerical tolerances and size caps shared by every module.

/// Tolerances used by the decoders, validators and checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Normal-equation residual allowed per data piece (scaled by `k`).
    pub normal_residual_per_row: f64,
    /// Relative pivot threshold for the rank-revealing LDL^T factorization.
    pub pivot: f64,
    /// Diagonal jitter, relative to the largest Gram diagonal, used when the
    /// pivoted factorization fails its residual check.
    pub jitter: f64,
    /// Negative squared errors above `-clamp` are rounded to zero.
    pub clamp: f64,
    /// Two worst-case errors closer than this are treated as a tie.
    pub tie: f64,
    /// Residual allowed when checking a row distribution against its system.
    pub system_residual: f64,
    /// Pivot tolerance for real-rank elimination.
    pub rank_pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        TOL
    }
}

pub const TOL: Tolerances = Tolerances {
    normal_residual_per_row: 1e-8,
    pivot: 1e-10,
    jitter: 1e-10,
    clamp: 1e-12,
    tie: 1e-12,
    system_residual: 1e-10,
    rank_pivot: 1e-9,
};

/// Size caps for constructions and searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Maximum `k * n` entries of a constructed encoding matrix.
    pub matrix_entries: usize,
    /// Maximum number of straggler subsets an exhaustive search may visit.
    pub subsets: u128,
    /// Maximum `n` for the order-2 Reed-Muller coefficient matrix.
    pub rm_vars: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            matrix_entries: 1 << 24,
            subsets: 1_000_000,
            rm_vars: 20,
        }
    }
}

impl Caps {
    /// Default caps with the subset cap taken from `GRADCODE_CAP` when set.
    pub fn from_env() -> Self {
        let mut caps = Caps::default();
        if let Some(cap) = std::env::var("GRADCODE_CAP")
            .ok()
            .and_then(|v| v.trim().parse::<u128>().ok())
        {
            caps.subsets = cap;
        }
        caps
    }
}
