//! The buyer's sequential correlation inference and the cost side of
//! leakage: pairwise correlation estimated one revealed sample per round,
//! the normalized influence matrix derived from it, and the opportunity and
//! coalition communication costs.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Rounds of consecutive sub-tolerance deltas required before an estimate
/// counts as converged.
pub const CONVERGENCE_STREAK: usize = 10;

/// Pairwise correlation state as the buyer sees it.
#[derive(Debug, Clone)]
pub struct LeakageMatrix {
    /// Estimated correlation, symmetric with unit diagonal. Pairs listed in
    /// `undefined_pairs` hold 0 here.
    pub r: Vec<Vec<f64>>,
    /// Normalized influence in [0, 1], zero diagonal.
    pub g_influence: Vec<Vec<f64>>,
    /// First round at which a pair's estimate stabilized (delta below
    /// tolerance for [`CONVERGENCE_STREAK`] consecutive rounds), if it did.
    pub rounds_to_converge: Vec<Vec<Option<usize>>>,
    /// Pairs whose correlation is undefined because one stream has zero
    /// variance.
    pub undefined_pairs: Vec<(usize, usize)>,
}

impl LeakageMatrix {
    /// A market with no estimated correlation (all-zero influence).
    pub fn zeros(devices: usize) -> Self {
        let mut r = vec![vec![0.0; devices]; devices];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        LeakageMatrix {
            r,
            g_influence: vec![vec![0.0; devices]; devices],
            rounds_to_converge: vec![vec![None; devices]; devices],
            undefined_pairs: Vec::new(),
        }
    }

    /// Build directly from a correlation matrix (used by synthetic solver
    /// instances); influence is derived by global-max normalization.
    pub fn from_correlation(r: Vec<Vec<f64>>) -> Self {
        let g_influence = influence_matrix(&r);
        let m = r.len();
        LeakageMatrix {
            r,
            g_influence,
            rounds_to_converge: vec![vec![None; m]; m],
            undefined_pairs: Vec::new(),
        }
    }

    pub fn devices(&self) -> usize {
        self.r.len()
    }
}

/// Online co-moment accumulator for one device pair.
#[derive(Debug, Clone, Copy, Default)]
struct PairState {
    count: f64,
    mean_x: f64,
    mean_y: f64,
    m2x: f64,
    m2y: f64,
    cxy: f64,
    last_r: Option<f64>,
    streak: usize,
    converged_at: Option<usize>,
}

impl PairState {
    fn update(&mut self, x: f64, y: f64) {
        self.count += 1.0;
        let dx = x - self.mean_x;
        self.mean_x += dx / self.count;
        let dy = y - self.mean_y;
        self.mean_y += dy / self.count;
        let dy2 = y - self.mean_y;
        self.m2x += dx * (x - self.mean_x);
        self.m2y += dy * dy2;
        self.cxy += dx * dy2;
    }

    fn correlation(&self) -> Option<f64> {
        if self.m2x <= 0.0 || self.m2y <= 0.0 {
            return None;
        }
        Some(self.cxy / (self.m2x * self.m2y).sqrt())
    }
}

/// Run the buyer's sequential inference: one revealed sample per round,
/// running Pearson correlation per device pair. A pair converges when its
/// successive estimates differ by less than `tol` for
/// [`CONVERGENCE_STREAK`] consecutive rounds; the final matrix keeps
/// updating to the end of the streams regardless.
pub fn sequential_correlation_estimate(streams: &[Vec<f64>], tol: f64) -> Result<LeakageMatrix> {
    if tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let m = streams.len();
    if m < 2 {
        return Err(Error::InvalidInput(
            "sequential estimation needs at least two devices".into(),
        ));
    }
    let rounds = streams.iter().map(Vec::len).min().unwrap_or(0);
    if rounds == 0 {
        return Err(Error::InvalidInput("streams are empty".into()));
    }

    let mut pairs: Vec<Vec<PairState>> = vec![vec![PairState::default(); m]; m];
    for round in 0..rounds {
        for i in 0..m {
            for j in (i + 1)..m {
                let state = &mut pairs[i][j];
                state.update(streams[i][round], streams[j][round]);
                if let Some(r) = state.correlation() {
                    if let Some(prev) = state.last_r {
                        if (r - prev).abs() < tol {
                            state.streak += 1;
                            if state.streak >= CONVERGENCE_STREAK && state.converged_at.is_none() {
                                state.converged_at = Some(round + 1);
                            }
                        } else {
                            state.streak = 0;
                            // A late excursion invalidates an early verdict.
                            state.converged_at = None;
                        }
                    }
                    state.last_r = Some(r);
                }
            }
        }
    }

    let mut r = vec![vec![0.0; m]; m];
    let mut rounds_to_converge = vec![vec![None; m]; m];
    let mut undefined_pairs = Vec::new();
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let state = &pairs[i][j];
            match state.correlation() {
                Some(val) => {
                    r[i][j] = val;
                    r[j][i] = val;
                }
                None => undefined_pairs.push((i, j)),
            }
            rounds_to_converge[i][j] = state.converged_at;
            rounds_to_converge[j][i] = state.converged_at;
        }
    }
    let g_influence = influence_matrix(&r);
    Ok(LeakageMatrix {
        r,
        g_influence,
        rounds_to_converge,
        undefined_pairs,
    })
}

/// Normalized influence `g_ij = |r_ij| / max_{k != l} |r_kl|` with zero
/// diagonal; all zeros when no off-diagonal correlation exists. Scale-free:
/// uniformly scaling the off-diagonal of `r` leaves the output unchanged.
pub fn influence_matrix(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = r.len();
    let mut max_abs = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                max_abs = max_abs.max(r[i][j].abs());
            }
        }
    }
    let mut g = vec![vec![0.0; m]; m];
    if max_abs > 0.0 {
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    g[i][j] = r[i][j].abs() / max_abs;
                }
            }
        }
    }
    g
}

/// Cost-side scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    /// Monetary units per round of coalition communication.
    pub unit_comm_cost: f64,
    /// Tolerance bound on the coalition cost.
    pub coalition_cost_bound: f64,
    /// Per-device bound on the opportunity cost.
    pub phi_threshold: Vec<f64>,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.unit_comm_cost < 0.0
            || self.coalition_cost_bound < 0.0
            || self.phi_threshold.iter().any(|&t| t < 0.0)
        {
            return Err(Error::InvalidInput("cost parameters must be non-negative".into()));
        }
        Ok(())
    }
}

/// Opportunity cost of device `j` inside coalition `members`:
/// the influence of every active peer, gated by `j`'s own participation.
///
/// Callers must include `j` in `members`.
pub fn opportunity_cost(
    j: usize,
    members: &BTreeSet<usize>,
    active: &[bool],
    g_influence: &[Vec<f64>],
) -> f64 {
    debug_assert!(members.contains(&j), "device {j} not in coalition");
    if !active[j] {
        return 0.0;
    }
    members
        .iter()
        .filter(|&&i| i != j && active[i])
        .map(|&i| g_influence[i][j])
        .sum()
}

/// Coalition communication cost: `|S| * rounds * unit_cost`, free for a
/// singleton since it has nobody to exchange with.
pub fn coalition_cost(size: usize, comm_rounds: usize, unit_comm_cost: f64) -> f64 {
    if size <= 1 {
        return 0.0;
    }
    size as f64 * comm_rounds as f64 * unit_comm_cost
}
