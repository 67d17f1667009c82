//! Coalition market core: coalition value, contracts pricing, feasibility,
//! hedonic preferences, and the three-phase MAJP solver (in [`solver`]).
//!
//! Semantics shared by the solver and the brute-force oracle:
//!
//! - Contract prices split a coalition's budget across all members in
//!   proportion to their sample counts, so member payments always sum to
//!   the coalition budget.
//! - Coalition budgets split the market budget in proportion to each
//!   coalition's union sample count.
//! - Participation is individually rational: starting from everyone
//!   active, members whose value bracket is negative deactivate
//!   (simultaneously, repeated to a fixed point; dropped members do not
//!   re-enter within the evaluation).
//! - A coalition violating any constraint is infeasible: it pays no
//!   hedonic preference and contributes zero value to the market.

pub mod solver;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::leakage::{coalition_cost, opportunity_cost};
use crate::learner::DataType;

pub use solver::{
    discover_types, is_nash_stable, majp_solve, DiscoveryOutcome, MarketInstance, MarketParams,
    PlatformView, TableGame,
};

/// Relative tolerance for value comparisons inside the solver.
pub(crate) const VALUE_EPS: f64 = 1e-9;

/// One seller as the market sees it.
#[derive(Debug, Clone)]
pub struct DeviceProfile {
    pub id: usize,
    /// Global ids of the samples the device offers; `n_j` is its size.
    pub sample_ids: BTreeSet<u64>,
    pub dtype: DataType,
    /// Gradient dissimilarity bound of this device's data.
    pub rho: f64,
    /// Participation flag; solvers recompute it, `true` by default.
    pub a: bool,
}

impl DeviceProfile {
    pub fn new(id: usize, sample_ids: BTreeSet<u64>, dtype: DataType, rho: f64) -> Self {
        DeviceProfile {
            id,
            sample_ids,
            dtype,
            rho,
            a: true,
        }
    }

    pub fn samples(&self) -> usize {
        self.sample_ids.len()
    }
}

/// A group of devices representing one data-type class, with its share of
/// the market budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    pub members: BTreeSet<usize>,
    pub type_level: usize,
    pub budget: f64,
}

/// A division of all devices into disjoint coalitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub coalitions: Vec<Coalition>,
    pub total_budget: f64,
}

impl Partition {
    /// Check the structural invariants: coalitions cover every device
    /// exactly once and their budgets sum to the market budget.
    pub fn validate(&self, num_devices: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.coalitions {
            for &m in &c.members {
                if m >= num_devices {
                    return Err(Error::InvalidInput(format!("unknown device {m}")));
                }
                if !seen.insert(m) {
                    return Err(Error::InvalidInput(format!(
                        "device {m} appears in two coalitions"
                    )));
                }
            }
            if c.budget < 0.0 {
                return Err(Error::InvalidInput("coalition budget must be >= 0".into()));
            }
        }
        if seen.len() != num_devices {
            return Err(Error::InvalidInput(format!(
                "partition covers {} of {num_devices} devices",
                seen.len()
            )));
        }
        let allocated: f64 = self.coalitions.iter().map(|c| c.budget).sum();
        if (allocated - self.total_budget).abs() > VALUE_EPS * self.total_budget.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "coalition budgets sum to {allocated}, expected {}",
                self.total_budget
            )));
        }
        Ok(())
    }

    /// Index of the coalition containing device `m`, if any.
    pub fn coalition_of(&self, m: usize) -> Option<usize> {
        self.coalitions.iter().position(|c| c.members.contains(&m))
    }

    pub fn largest_coalition(&self) -> usize {
        self.coalitions.iter().map(|c| c.members.len()).max().unwrap_or(0)
    }
}

/// Bounds of the market's feasibility constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// Cap on the coalition's participation-weighted dissimilarity.
    pub rho_max: f64,
    /// Cap on the coalition communication cost.
    pub coalition_cost_bound: f64,
    /// Per-device cap on the leakage opportunity cost.
    pub phi_thresholds: Vec<f64>,
}

impl ConstraintSet {
    /// Generous bounds that never bind; useful for unconstrained games.
    pub fn unbounded(num_devices: usize) -> Self {
        ConstraintSet {
            rho_max: f64::INFINITY,
            coalition_cost_bound: f64::INFINITY,
            phi_thresholds: vec![f64::INFINITY; num_devices],
        }
    }

    pub fn validate(&self, num_devices: usize) -> Result<()> {
        if self.rho_max < 0.0 || self.coalition_cost_bound < 0.0 {
            return Err(Error::InvalidInput("constraint bounds must be >= 0".into()));
        }
        if self.phi_thresholds.len() != num_devices {
            return Err(Error::InvalidInput(format!(
                "phi_thresholds has length {}, expected {num_devices}",
                self.phi_thresholds.len()
            )));
        }
        if self.phi_thresholds.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidInput("phi thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Why a coalition failed the feasibility screen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Member payments do not sum to the coalition budget.
    BudgetImbalance,
    /// A participant's value bracket is negative.
    NegativeMemberValue(usize),
    /// A participant already saw a strictly better coalition this round.
    DominatedAlternative(usize),
    /// Participation-weighted dissimilarity exceeds the market bound.
    DissimilarityExceeded,
    /// Communication cost exceeds the tolerated bound.
    CoalitionCostExceeded,
    /// A member's leakage opportunity cost exceeds its threshold.
    OpportunityCostExceeded(usize),
}

/// One accepted switch operation.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub iter: usize,
    pub device: usize,
    pub from_coalition: usize,
    pub to_coalition: usize,
    pub value_before: f64,
    pub value_after: f64,
}

/// Full record of one solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub iterations: Vec<SwitchRecord>,
    pub final_partition: Partition,
    /// Contract price per device (proportional share of its coalition
    /// budget); sums to the market budget.
    pub final_prices: Vec<f64>,
    pub final_participation: Vec<bool>,
    /// Levels assigned by type discovery, per device.
    pub levels: Vec<usize>,
    pub total_value: f64,
    /// Communication cost spent in the discovery phase.
    pub discovery_cost: f64,
}

/// Proportional contract share: `budget * n_j / sum(member counts)`.
///
/// Raw shares are proportional to each member's fraction of the coalition
/// union; normalizing by the member count sum keeps the shares summing to
/// the budget exactly even when member sets overlap.
pub fn proportional_price(budget: f64, n_j: usize, member_counts: &[usize]) -> Result<f64> {
    let total: usize = member_counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "coalition holds no samples to price".into(),
        ));
    }
    if budget < 0.0 {
        return Err(Error::InvalidInput("budget must be >= 0".into()));
    }
    Ok(budget * n_j as f64 / total as f64)
}

/// Group gain from pooling exposed types:
/// `log(1 + sum of participating phi) / log(1 + market size)`.
/// Positive, concave in the participating sum, and normalized to [0, 1].
pub fn group_gain(members: &BTreeSet<usize>, active: &[bool], devices: &[DeviceProfile]) -> f64 {
    let phi_sum: f64 = members
        .iter()
        .filter(|&&m| active[m])
        .map(|&m| devices[m].dtype.phi)
        .sum();
    (1.0 + phi_sum).ln() / (1.0 + devices.len() as f64).ln()
}

/// Union sample count of the members' id sets.
pub fn union_count(members: &BTreeSet<usize>, devices: &[DeviceProfile]) -> usize {
    let mut union: BTreeSet<u64> = BTreeSet::new();
    for &m in members {
        union.extend(devices[m].sample_ids.iter().copied());
    }
    union.len()
}

/// Participation-weighted average dissimilarity:
/// `sum_j a_j * rho_j * n_j / union`.
pub fn dissimilarity(members: &BTreeSet<usize>, active: &[bool], devices: &[DeviceProfile]) -> f64 {
    let union = union_count(members, devices);
    if union == 0 {
        return 0.0;
    }
    members
        .iter()
        .filter(|&&m| active[m])
        .map(|&m| devices[m].rho * devices[m].samples() as f64 / union as f64)
        .sum()
}

/// Coalition value: per participating member, the contract price plus the
/// group gain, minus the price-scaled leakage opportunity cost and the
/// coalition communication cost.
///
/// `prices` and `active` are indexed by device id.
pub fn coalition_value(
    members: &BTreeSet<usize>,
    devices: &[DeviceProfile],
    active: &[bool],
    prices: &[f64],
    g_influence: &[Vec<f64>],
    comm_rounds: usize,
    unit_comm_cost: f64,
) -> f64 {
    let f_s = group_gain(members, active, devices);
    let c_s = coalition_cost(members.len(), comm_rounds, unit_comm_cost);
    members
        .iter()
        .filter(|&&j| active[j])
        .map(|&j| {
            let c_j = opportunity_cost(j, members, active, g_influence);
            prices[j] * (1.0 - c_j) + f_s - c_s
        })
        .sum()
}

/// Everything the market needs to know about one coalition under a given
/// budget: prices, who participates, member value brackets, feasibility,
/// and the hedonic preference each member derives.
#[derive(Debug, Clone)]
pub struct CoalitionAssessment {
    /// Sorted member ids, aligning the per-member vectors below.
    pub members: Vec<usize>,
    pub payments: Vec<f64>,
    pub participation: Vec<bool>,
    /// Individual value brackets (0 for inactive members).
    pub member_values: Vec<f64>,
    /// Eq-style hedonic preference: the contract payment when the member's
    /// level matches the coalition type and the coalition is feasible.
    pub preferences: Vec<f64>,
    pub violations: Vec<Violation>,
    pub feasible: bool,
    /// Raw coalition value (sum of active brackets).
    pub raw_value: f64,
    /// Contribution to the market objective: `raw_value` if feasible, else 0.
    pub value: f64,
    /// Union sample count, the coalition's budget weight.
    pub union_count: usize,
    /// Decomposition `raw_value = alpha * budget + beta` for the current
    /// participation set.
    pub alpha: f64,
    pub beta: f64,
    pub group_gain: f64,
}

impl CoalitionAssessment {
    pub fn payment_of(&self, device: usize) -> f64 {
        self.members
            .iter()
            .position(|&m| m == device)
            .map(|i| self.payments[i])
            .unwrap_or(0.0)
    }

    pub fn preference_of(&self, device: usize) -> f64 {
        self.members
            .iter()
            .position(|&m| m == device)
            .map(|i| self.preferences[i])
            .unwrap_or(0.0)
    }

    pub fn value_of(&self, device: usize) -> f64 {
        self.members
            .iter()
            .position(|&m| m == device)
            .map(|i| self.member_values[i])
            .unwrap_or(0.0)
    }
}

/// Evaluate one coalition under a fixed budget.
///
/// `visited` carries the best individual value each device has seen in
/// already-evaluated alternatives this round; a participant falling below
/// its recorded best makes the coalition infeasible for it.
#[allow(clippy::too_many_arguments)]
pub fn assess_coalition(
    members: &BTreeSet<usize>,
    type_level: usize,
    budget: f64,
    devices: &[DeviceProfile],
    g_influence: &[Vec<f64>],
    constraints: &ConstraintSet,
    comm_rounds: usize,
    unit_comm_cost: f64,
    visited: Option<&BTreeMap<usize, f64>>,
) -> CoalitionAssessment {
    assess_coalition_hinted(
        members,
        type_level,
        budget,
        devices,
        g_influence,
        constraints,
        comm_rounds,
        unit_comm_cost,
        visited,
        None,
    )
}

/// [`assess_coalition`] with a precomputed union sample count, so hot
/// paths that already track coalition unions skip the set union here.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assess_coalition_hinted(
    members: &BTreeSet<usize>,
    type_level: usize,
    budget: f64,
    devices: &[DeviceProfile],
    g_influence: &[Vec<f64>],
    constraints: &ConstraintSet,
    comm_rounds: usize,
    unit_comm_cost: f64,
    visited: Option<&BTreeMap<usize, f64>>,
    union_hint: Option<usize>,
) -> CoalitionAssessment {
    assess_coalition_full(
        members,
        type_level,
        budget,
        devices,
        g_influence,
        constraints,
        comm_rounds,
        unit_comm_cost,
        visited,
        union_hint,
        None,
    )
}

/// Innermost evaluator. `influence_free` flags devices whose influence
/// column is known to be all zero, letting sparse markets skip the
/// pairwise cost scans.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assess_coalition_full(
    members: &BTreeSet<usize>,
    type_level: usize,
    budget: f64,
    devices: &[DeviceProfile],
    g_influence: &[Vec<f64>],
    constraints: &ConstraintSet,
    comm_rounds: usize,
    unit_comm_cost: f64,
    visited: Option<&BTreeMap<usize, f64>>,
    union_hint: Option<usize>,
    influence_free: Option<&[bool]>,
) -> CoalitionAssessment {
    let member_list: Vec<usize> = members.iter().copied().collect();
    let counts: Vec<usize> = member_list.iter().map(|&m| devices[m].samples()).collect();
    let count_sum: usize = counts.iter().sum();
    let size = member_list.len();

    let payments: Vec<f64> = if count_sum == 0 {
        vec![0.0; size]
    } else {
        counts
            .iter()
            .map(|&n| budget * n as f64 / count_sum as f64)
            .collect()
    };

    let c_s = coalition_cost(size, comm_rounds, unit_comm_cost);

    // Per-device lookup tables for the fixed-point below.
    let max_id = devices.len();
    let mut price_of = vec![0.0; max_id];
    for (i, &m) in member_list.iter().enumerate() {
        price_of[m] = payments[i];
    }

    // Individually rational participation: drop every member whose bracket
    // is negative, simultaneously, until stable. Dropped members stay out.
    let mut active = vec![false; max_id];
    for &m in &member_list {
        active[m] = true;
    }
    let peer_cost = |m: usize, active: &[bool]| -> f64 {
        if influence_free.is_some_and(|free| free[m]) {
            return 0.0;
        }
        opportunity_cost(m, members, active, g_influence)
    };
    let mut brackets = vec![0.0; max_id];
    let mut cost_of = vec![0.0; max_id];
    loop {
        let f_s = group_gain(members, &active, devices);
        let mut dropped = false;
        let mut to_drop = Vec::new();
        for &m in &member_list {
            if !active[m] {
                continue;
            }
            let c_m = peer_cost(m, &active);
            cost_of[m] = c_m;
            let bracket = price_of[m] * (1.0 - c_m) + f_s - c_s;
            brackets[m] = bracket;
            if bracket < 0.0 {
                to_drop.push(m);
                dropped = true;
            }
        }
        for m in to_drop {
            active[m] = false;
            brackets[m] = 0.0;
        }
        if !dropped {
            break;
        }
    }

    let f_s = group_gain(members, &active, devices);
    let participation: Vec<bool> = member_list.iter().map(|&m| active[m]).collect();
    let member_values: Vec<f64> = member_list.iter().map(|&m| brackets[m]).collect();
    let raw_value: f64 = member_values.iter().sum();

    // Budget-linear decomposition for the fixed participation set.
    let n_active = participation.iter().filter(|&&a| a).count();
    let alpha = if count_sum == 0 {
        0.0
    } else {
        member_list
            .iter()
            .zip(&counts)
            .filter(|(&m, _)| active[m])
            .map(|(&m, &n)| n as f64 * (1.0 - cost_of[m]) / count_sum as f64)
            .sum()
    };
    let beta = n_active as f64 * (f_s - c_s);

    // Feasibility screen.
    let mut violations = Vec::new();
    let paid: f64 = payments.iter().sum();
    if (paid - budget).abs() > VALUE_EPS * budget.abs().max(1.0) {
        violations.push(Violation::BudgetImbalance);
    }
    for (i, &m) in member_list.iter().enumerate() {
        if participation[i] && member_values[i] < -VALUE_EPS {
            violations.push(Violation::NegativeMemberValue(m));
        }
    }
    if let Some(best) = visited {
        for (i, &m) in member_list.iter().enumerate() {
            if !participation[i] {
                continue;
            }
            if let Some(&recorded) = best.get(&m) {
                if member_values[i] < recorded - VALUE_EPS {
                    violations.push(Violation::DominatedAlternative(m));
                }
            }
        }
    }
    let union = union_hint.unwrap_or_else(|| union_count(members, devices));
    let rho_s = if union == 0 {
        0.0
    } else {
        member_list
            .iter()
            .filter(|&&m| active[m])
            .map(|&m| devices[m].rho * devices[m].samples() as f64 / union as f64)
            .sum()
    };
    if rho_s > constraints.rho_max + VALUE_EPS {
        violations.push(Violation::DissimilarityExceeded);
    }
    if c_s > constraints.coalition_cost_bound + VALUE_EPS {
        violations.push(Violation::CoalitionCostExceeded);
    }
    for &m in &member_list {
        let c_m = if active[m] { cost_of[m] } else { 0.0 };
        if c_m > constraints.phi_thresholds[m] + VALUE_EPS {
            violations.push(Violation::OpportunityCostExceeded(m));
        }
    }

    let feasible = violations.is_empty();
    let value = if feasible { raw_value } else { 0.0 };

    let preferences: Vec<f64> = member_list
        .iter()
        .zip(&payments)
        .map(|(&m, &p)| {
            if feasible && devices[m].dtype.level == type_level {
                p
            } else {
                0.0
            }
        })
        .collect();

    CoalitionAssessment {
        members: member_list,
        payments,
        participation,
        member_values,
        preferences,
        violations,
        feasible,
        raw_value,
        value,
        union_count: union,
        alpha,
        beta,
        group_gain: f_s,
    }
}

/// Feasibility of a coalition under a fixed budget, with the violations
/// found. Thin wrapper over [`assess_coalition`].
#[allow(clippy::too_many_arguments)]
pub fn feasible(
    members: &BTreeSet<usize>,
    budget: f64,
    devices: &[DeviceProfile],
    g_influence: &[Vec<f64>],
    constraints: &ConstraintSet,
    comm_rounds: usize,
    unit_comm_cost: f64,
    visited: Option<&BTreeMap<usize, f64>>,
) -> (bool, Vec<Violation>) {
    let a = assess_coalition(
        members,
        0,
        budget,
        devices,
        g_influence,
        constraints,
        comm_rounds,
        unit_comm_cost,
        visited,
    );
    (a.feasible, a.violations)
}

/// Hedonic preference of device `m` for a coalition: its contract payment
/// when the coalition matches `m`'s type and passes the feasibility
/// screen, zero otherwise.
#[allow(clippy::too_many_arguments)]
pub fn preference(
    m: usize,
    members: &BTreeSet<usize>,
    type_level: usize,
    budget: f64,
    devices: &[DeviceProfile],
    g_influence: &[Vec<f64>],
    constraints: &ConstraintSet,
    comm_rounds: usize,
    unit_comm_cost: f64,
) -> f64 {
    let a = assess_coalition(
        members,
        type_level,
        budget,
        devices,
        g_influence,
        constraints,
        comm_rounds,
        unit_comm_cost,
        None,
    );
    a.preference_of(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::data_type;
    use approx::assert_abs_diff_eq;

    pub(crate) fn device(id: usize, n: usize, phi_driver: f64, rho: f64) -> DeviceProfile {
        // phi = phi_driver via xi = phi_driver, theta = 1.
        let dtype = data_type(1.0, phi_driver, 4).unwrap();
        let base = 10_000 * id as u64;
        DeviceProfile::new(id, (base..base + n as u64).collect(), dtype, rho)
    }

    fn no_influence(m: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0; m]; m]
    }

    #[test]
    fn proportional_price_examples() {
        assert_abs_diff_eq!(proportional_price(7.0, 4, &[4]).unwrap(), 7.0);
        assert_abs_diff_eq!(proportional_price(10.0, 3, &[3, 2]).unwrap(), 6.0);
        assert_abs_diff_eq!(proportional_price(10.0, 2, &[3, 2]).unwrap(), 4.0);
        assert!(proportional_price(10.0, 0, &[0, 0]).is_err());
    }

    #[test]
    fn payments_sum_to_budget_even_with_overlap() {
        // Two members with heavily overlapping data shrink the union, but
        // contract shares still balance the budget.
        let counts = [5usize, 4];
        let total: f64 = counts
            .iter()
            .map(|&n| proportional_price(9.0, n, &counts).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn group_gain_properties() {
        let devices = vec![device(0, 2, 0.0, 0.0), device(1, 2, 0.8, 0.0)];
        let both: BTreeSet<usize> = [0, 1].into_iter().collect();
        // Empty participation: zero gain.
        assert_eq!(group_gain(&both, &[false, false], &devices), 0.0);
        // Adding a member with positive phi strictly increases the gain.
        let only0 = group_gain(&both, &[true, false], &devices);
        let with1 = group_gain(&both, &[true, true], &devices);
        assert!(with1 > only0);
        // Concavity of the underlying map: f(x) + f(y) >= f(x + y).
        let f = |x: f64| (1.0 + x).ln();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (i as f64 * 0.3, j as f64 * 0.3);
                assert!(f(x) + f(y) >= f(x + y) - 1e-12);
            }
        }
    }

    #[test]
    fn dissimilarity_examples() {
        let mut devices = vec![device(0, 1, 0.5, 0.2), device(1, 1, 0.5, 0.6)];
        let both: BTreeSet<usize> = [0, 1].into_iter().collect();
        // Two participants with disjoint single samples: weighted average.
        assert_abs_diff_eq!(
            dissimilarity(&both, &[true, true], &devices),
            0.4,
            epsilon = 1e-12
        );
        // All-zero rho.
        devices[0].rho = 0.0;
        devices[1].rho = 0.0;
        assert_eq!(dissimilarity(&both, &[true, true], &devices), 0.0);
        // One participant owning the full union.
        let solo: BTreeSet<usize> = [0].into_iter().collect();
        devices[0].rho = 0.4;
        assert_abs_diff_eq!(
            dissimilarity(&solo, &[true, true], &devices),
            0.4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coalition_value_examples() {
        // Single participant, zero costs, zero group gain, price 5.
        let devices = vec![device(0, 3, 0.0, 0.0)];
        let solo: BTreeSet<usize> = [0].into_iter().collect();
        let g = no_influence(1);
        let v = coalition_value(&solo, &devices, &[true], &[5.0], &g, 0, 0.0);
        assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);

        // Value scales linearly with the offered price when costs vanish.
        let v2 = coalition_value(&solo, &devices, &[true], &[10.0], &g, 0, 0.0);
        assert_abs_diff_eq!(v2, 2.0 * v, epsilon = 1e-12);

        // Nobody active: zero.
        let v0 = coalition_value(&solo, &devices, &[false], &[5.0], &g, 0, 0.0);
        assert_eq!(v0, 0.0);
    }

    #[test]
    fn assessment_prices_participation_and_preference() {
        let devices = vec![device(0, 3, 0.5, 0.1), device(1, 2, 0.5, 0.1)];
        let members: BTreeSet<usize> = [0, 1].into_iter().collect();
        let constraints = ConstraintSet::unbounded(2);
        let g = no_influence(2);
        let a = assess_coalition(&members, 2, 10.0, &devices, &g, &constraints, 1, 0.01, None);
        assert!(a.feasible, "violations: {:?}", a.violations);
        assert_abs_diff_eq!(a.payments[0], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.payments[1], 4.0, epsilon = 1e-12);
        assert!(a.participation.iter().all(|&x| x));
        // Level 2 devices in a level-2 coalition: preference = payment.
        assert_eq!(devices[0].dtype.level, 2);
        assert_abs_diff_eq!(a.preference_of(0), 6.0, epsilon = 1e-12);
        // Value decomposition holds.
        assert_abs_diff_eq!(a.raw_value, a.alpha * 10.0 + a.beta, epsilon = 1e-9);
    }

    #[test]
    fn preference_gated_by_type_and_feasibility() {
        let devices = vec![device(0, 3, 0.5, 0.1)];
        let solo: BTreeSet<usize> = [0].into_iter().collect();
        let constraints = ConstraintSet::unbounded(1);
        let g = no_influence(1);
        // Wrong type level: zero preference.
        let wrong = preference(0, &solo, 4, 7.0, &devices, &g, &constraints, 0, 0.0);
        assert_eq!(wrong, 0.0);
        // Own level, alone: the full budget.
        let own = preference(
            0,
            &solo,
            devices[0].dtype.level,
            7.0,
            &devices,
            &g,
            &constraints,
            0,
            0.0,
        );
        assert_abs_diff_eq!(own, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn feasibility_boundaries() {
        let devices = vec![device(0, 2, 0.5, 0.3), device(1, 2, 0.5, 0.5)];
        let members: BTreeSet<usize> = [0, 1].into_iter().collect();
        let g = no_influence(2);

        // Singleton with positive price and zero costs is feasible.
        let solo: BTreeSet<usize> = [0].into_iter().collect();
        let (ok, v) = feasible(
            &solo,
            3.0,
            &devices,
            &g,
            &ConstraintSet::unbounded(2),
            0,
            0.0,
            None,
        );
        assert!(ok, "{v:?}");

        // Dissimilarity just over the cap.
        let rho_s = dissimilarity(&members, &[true, true], &devices);
        let tight = ConstraintSet {
            rho_max: rho_s - 1e-6,
            coalition_cost_bound: f64::INFINITY,
            phi_thresholds: vec![f64::INFINITY; 2],
        };
        let (ok, viol) = feasible(&members, 3.0, &devices, &g, &tight, 0, 0.0, None);
        assert!(!ok);
        assert!(viol.contains(&Violation::DissimilarityExceeded));

        // Opportunity cost over a member threshold.
        let strong = vec![vec![0.0, 0.9], vec![0.9, 0.0]];
        let capped = ConstraintSet {
            rho_max: f64::INFINITY,
            coalition_cost_bound: f64::INFINITY,
            phi_thresholds: vec![0.5, f64::INFINITY],
        };
        let (ok, viol) = feasible(&members, 3.0, &devices, &strong, &capped, 0, 0.0, None);
        assert!(!ok);
        assert!(viol.contains(&Violation::OpportunityCostExceeded(0)));

        // Coalition cost over its bound.
        let costly = ConstraintSet {
            rho_max: f64::INFINITY,
            coalition_cost_bound: 0.05,
            phi_thresholds: vec![f64::INFINITY; 2],
        };
        let (ok, viol) = feasible(&members, 3.0, &devices, &g, &costly, 4, 0.01, None);
        assert!(!ok, "cost {} should exceed 0.05", 2.0 * 4.0 * 0.01);
        assert!(viol.contains(&Violation::CoalitionCostExceeded));
    }

    #[test]
    fn participation_drops_on_negative_bracket() {
        // Influence above 1 makes the priced bracket negative for the
        // dominated device, which then opts out.
        let devices = vec![device(0, 5, 0.0, 0.0), device(1, 5, 0.0, 0.0)];
        let members: BTreeSet<usize> = [0, 1].into_iter().collect();
        let g = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let mut constraints = ConstraintSet::unbounded(2);
        constraints.phi_thresholds = vec![f64::INFINITY; 2];
        let a = assess_coalition(
            &members,
            1,
            10.0,
            &devices,
            &g,
            &constraints,
            2,
            0.3,
            None,
        );
        // c_j = 1 for both while both are active, so brackets are
        // -(coalition cost) < 0 and both drop.
        assert!(a.participation.iter().all(|&x| !x));
        assert_eq!(a.raw_value, 0.0);
    }

    #[test]
    fn visited_set_marks_dominated_alternatives() {
        let devices = vec![device(0, 2, 0.5, 0.0)];
        let solo: BTreeSet<usize> = [0].into_iter().collect();
        let g = no_influence(1);
        let constraints = ConstraintSet::unbounded(1);
        let mut visited = BTreeMap::new();
        visited.insert(0usize, 100.0);
        let (ok, viol) = feasible(
            &solo,
            3.0,
            &devices,
            &g,
            &constraints,
            0,
            0.0,
            Some(&visited),
        );
        assert!(!ok);
        assert!(viol.contains(&Violation::DominatedAlternative(0)));
    }
}
