//! The MAJP solver: private type discovery (Phase I), iterative switch
//! operations between coalitions until a stable partition (Phase II), and
//! final value/pricing computation (Phase III).
//!
//! A switch is accepted only when it strictly improves the moving device's
//! hedonic preference and does not decrease the overall market value, so
//! the trace of accepted switches is non-decreasing in value and the final
//! partition admits no improving unilateral deviation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::learner::quantize_level;
use crate::rng;

use super::{
    assess_coalition, union_count, Coalition, ConstraintSet, DeviceProfile, Partition, SolveTrace,
    SwitchRecord, VALUE_EPS,
};

/// Market-level scalars consumed by the solver.
#[derive(Debug, Clone)]
pub struct MarketParams {
    pub total_budget: f64,
    pub k_levels: usize,
    pub comm_rounds: usize,
    pub unit_comm_cost: f64,
    pub constraints: ConstraintSet,
    pub max_iters: usize,
}

/// One solvable market: devices, their pairwise influence, and parameters.
#[derive(Debug, Clone)]
pub struct MarketInstance {
    pub devices: Vec<DeviceProfile>,
    pub g_influence: Vec<Vec<f64>>,
    pub params: MarketParams,
}

impl MarketInstance {
    pub fn validate(&self) -> Result<()> {
        let m = self.devices.len();
        if m == 0 {
            return Err(Error::InvalidInput("market needs at least one device".into()));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.id != i {
                return Err(Error::InvalidInput(format!(
                    "device ids must be dense: position {i} holds id {}",
                    d.id
                )));
            }
            if d.sample_ids.is_empty() {
                return Err(Error::InvalidInput(format!("device {i} has no samples")));
            }
            if d.rho < 0.0 {
                return Err(Error::InvalidInput(format!("device {i} has negative rho")));
            }
        }
        if self.g_influence.len() != m || self.g_influence.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "influence matrix must be {m}x{m}"
            )));
        }
        if self.params.total_budget < 0.0 {
            return Err(Error::InvalidInput("total budget must be >= 0".into()));
        }
        if self.params.k_levels == 0 {
            return Err(Error::InvalidInput("k_levels must be >= 1".into()));
        }
        if self.params.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        self.params.constraints.validate(m)?;
        Ok(())
    }
}

/// What the platform learns from type discovery: aggregates only, never a
/// per-device type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlatformView {
    /// Number of devices per level.
    pub level_counts: BTreeMap<usize, usize>,
}

/// Result of Phase I.
#[derive(Debug, Clone)]
pub struct DiscoveryOutcome {
    /// Level per device, in device order.
    pub levels: Vec<usize>,
    /// Accumulated communication cost: one ping per device.
    pub comm_cost: f64,
    pub platform_view: PlatformView,
}

/// Private discovery of device types. Devices are permuted over an
/// abstract trusted channel and each learns its own quantized level; the
/// platform only ever sees per-level counts.
pub fn discover_types(
    devices: &[DeviceProfile],
    k_levels: usize,
    unit_comm_cost: f64,
    seed: u64,
) -> DiscoveryOutcome {
    let mut order: Vec<usize> = (0..devices.len()).collect();
    order.shuffle(&mut rng::stream_rng(seed, 0xA17));

    let mut levels = vec![0usize; devices.len()];
    let mut view = PlatformView::default();
    let mut comm_cost = 0.0;
    for &m in &order {
        // One ping per device against the proxy type sets.
        comm_cost += unit_comm_cost;
        let level = quantize_level(devices[m].dtype.phi, k_levels);
        levels[m] = level;
        *view.level_counts.entry(level).or_insert(0) += 1;
    }
    DiscoveryOutcome {
        levels,
        comm_cost,
        platform_view: view,
    }
}

// ---------------------------------------------------------------------------
// Generic hedonic engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub id: usize,
    pub level: usize,
    pub members: BTreeSet<usize>,
}

/// Evaluation of one coalition inside a partition.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlockEval {
    pub value: f64,
    pub feasible: bool,
    /// Budget-linear decomposition of the raw value for the frozen
    /// participation set: `raw = alpha * budget + beta`.
    pub alpha: f64,
    pub beta: f64,
    pub payments: BTreeMap<usize, f64>,
    pub preferences: BTreeMap<usize, f64>,
    pub member_values: BTreeMap<usize, f64>,
    pub participation: BTreeMap<usize, bool>,
}

pub(crate) trait GameModel {
    fn num_devices(&self) -> usize;
    fn total_budget(&self) -> f64;
    fn max_iters(&self) -> usize;
    /// Type level a fresh singleton of `m` would declare.
    fn device_level(&self, m: usize) -> usize;
    /// Whether preference is gated on matching levels (lets the engine
    /// skip provably-zero-preference targets).
    fn level_gated(&self) -> bool;
    /// Budget weight of a member set (its union sample count for markets).
    fn weight(&self, members: &BTreeSet<usize>) -> f64;
    fn eval_block(
        &self,
        members: &BTreeSet<usize>,
        level: usize,
        budget: f64,
        visited: Option<&BTreeMap<usize, f64>>,
    ) -> BlockEval;
    /// Whether candidate screening must re-evaluate the whole partition
    /// (exact) instead of budget-scaling unaffected coalitions.
    fn exact_candidates(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Existing(usize),
    Fresh,
}

struct EngineState {
    blocks: Vec<Block>,
    evals: Vec<BlockEval>,
    weights: Vec<f64>,
    weight_sum: f64,
    total: f64,
    next_id: usize,
}

fn value_eps(total: f64) -> f64 {
    VALUE_EPS * total.abs().max(1.0)
}

fn strictly_better(candidate: f64, current: f64) -> bool {
    candidate > current + VALUE_EPS * current.abs().max(1e-6)
}

fn full_eval<G: GameModel>(game: &G, blocks: &[Block]) -> (Vec<BlockEval>, Vec<f64>, f64, f64) {
    let weights: Vec<f64> = blocks.iter().map(|b| game.weight(&b.members)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut evals = Vec::with_capacity(blocks.len());
    let mut total = 0.0;
    for (b, &w) in blocks.iter().zip(&weights) {
        let budget = if weight_sum > 0.0 {
            game.total_budget() * w / weight_sum
        } else {
            0.0
        };
        let e = game.eval_block(&b.members, b.level, budget, None);
        total += e.value;
        evals.push(e);
    }
    (evals, weights, weight_sum, total)
}

struct CandidateOutcome {
    pref_after: f64,
    total_after: f64,
    member_value_after: f64,
}

/// Screen the move of `m` from block `from_idx` to `target` without
/// mutating the state. Affected coalitions are evaluated exactly under the
/// post-move budgets; the rest keep their participation and feasibility
/// and scale linearly with their new budget (unless the game demands exact
/// candidates).
fn candidate_eval<G: GameModel>(
    game: &G,
    state: &EngineState,
    m: usize,
    from_idx: usize,
    target: Target,
    visited: Option<&BTreeMap<usize, f64>>,
) -> CandidateOutcome {
    let mut from_members = state.blocks[from_idx].members.clone();
    from_members.remove(&m);
    let (to_members, to_level, to_idx) = match target {
        Target::Existing(t) => {
            let mut ms = state.blocks[t].members.clone();
            ms.insert(m);
            (ms, state.blocks[t].level, Some(t))
        }
        Target::Fresh => {
            let ms: BTreeSet<usize> = [m].into_iter().collect();
            (ms, game.device_level(m), None)
        }
    };

    if game.exact_candidates() {
        let mut blocks: Vec<Block> = Vec::with_capacity(state.blocks.len() + 1);
        for (i, b) in state.blocks.iter().enumerate() {
            let members = if i == from_idx {
                from_members.clone()
            } else if Some(i) == to_idx {
                to_members.clone()
            } else {
                b.members.clone()
            };
            if !members.is_empty() {
                blocks.push(Block {
                    id: b.id,
                    level: b.level,
                    members,
                });
            }
        }
        if to_idx.is_none() {
            blocks.push(Block {
                id: usize::MAX,
                level: to_level,
                members: to_members.clone(),
            });
        }
        let (evals, _, _, total_after) = full_eval(game, &blocks);
        let to_eval = blocks
            .iter()
            .zip(&evals)
            .find(|(b, _)| b.members.contains(&m))
            .map(|(_, e)| e)
            .expect("moved device must be in some block");
        return CandidateOutcome {
            pref_after: to_eval.preferences.get(&m).copied().unwrap_or(0.0),
            total_after,
            member_value_after: to_eval.member_values.get(&m).copied().unwrap_or(0.0),
        };
    }

    let w_from_new = if from_members.is_empty() {
        0.0
    } else {
        game.weight(&from_members)
    };
    let w_to_new = game.weight(&to_members);
    let w_to_old = to_idx.map(|t| state.weights[t]).unwrap_or(0.0);
    let new_weight_sum =
        state.weight_sum - state.weights[from_idx] - w_to_old + w_from_new + w_to_new;
    let budget_of = |w: f64| {
        if new_weight_sum > 0.0 {
            game.total_budget() * w / new_weight_sum
        } else {
            0.0
        }
    };

    let mut total_after = 0.0;
    for (k, e) in state.evals.iter().enumerate() {
        if k == from_idx || Some(k) == to_idx {
            continue;
        }
        if e.feasible {
            total_after += e.alpha * budget_of(state.weights[k]) + e.beta;
        }
    }
    if !from_members.is_empty() {
        let e = game.eval_block(
            &from_members,
            state.blocks[from_idx].level,
            budget_of(w_from_new),
            visited,
        );
        total_after += e.value;
    }
    let to_eval = game.eval_block(&to_members, to_level, budget_of(w_to_new), visited);
    total_after += to_eval.value;

    CandidateOutcome {
        pref_after: to_eval.preferences.get(&m).copied().unwrap_or(0.0),
        total_after,
        member_value_after: to_eval.member_values.get(&m).copied().unwrap_or(0.0),
    }
}

/// Candidate targets for a device, in seeded random order, fresh singleton
/// last. Level-gated games only look at coalitions the device could be
/// paid in.
fn candidate_targets<G: GameModel>(
    game: &G,
    state: &EngineState,
    m: usize,
    from_idx: usize,
    order_rng: &mut impl Rng,
) -> Vec<Target> {
    let mut existing: Vec<usize> = (0..state.blocks.len())
        .filter(|&k| k != from_idx)
        .filter(|&k| !game.level_gated() || state.blocks[k].level == game.device_level(m))
        .collect();
    existing.shuffle(order_rng);
    let mut targets: Vec<Target> = existing.into_iter().map(Target::Existing).collect();

    let from = &state.blocks[from_idx];
    let already_own_singleton = from.members.len() == 1
        && (!game.level_gated() || from.level == game.device_level(m));
    if !already_own_singleton {
        targets.push(Target::Fresh);
    }
    targets
}

fn run_engine<G: GameModel>(
    game: &G,
    initial: Vec<(usize, BTreeSet<usize>)>,
    seed: u64,
) -> Result<(EngineState, Vec<SwitchRecord>)> {
    let mut order_rng = rng::stream_rng(seed, 0xE9);
    let blocks: Vec<Block> = initial
        .into_iter()
        .filter(|(_, members)| !members.is_empty())
        .enumerate()
        .map(|(i, (level, members))| Block {
            id: i,
            level,
            members,
        })
        .collect();
    let next_id = blocks.len();
    let (evals, weights, weight_sum, total) = full_eval(game, &blocks);
    let mut state = EngineState {
        blocks,
        evals,
        weights,
        weight_sum,
        total,
        next_id,
    };

    let mut trace: Vec<SwitchRecord> = Vec::new();
    let mut accepted = 0usize;
    let mut stabilizing = false;

    loop {
        let mut visited: BTreeMap<usize, f64> = BTreeMap::new();
        let mut order: Vec<usize> = (0..game.num_devices()).collect();
        order.shuffle(&mut order_rng);
        let mut any = false;

        for &dev in &order {
            let from_idx = state
                .blocks
                .iter()
                .position(|b| b.members.contains(&dev))
                .expect("every device sits in a block");
            let pref_now = state.evals[from_idx]
                .preferences
                .get(&dev)
                .copied()
                .unwrap_or(0.0);
            if !stabilizing {
                let v_now = state.evals[from_idx]
                    .member_values
                    .get(&dev)
                    .copied()
                    .unwrap_or(0.0);
                let e = visited.entry(dev).or_insert(f64::NEG_INFINITY);
                *e = e.max(v_now);
            }

            for target in candidate_targets(game, &state, dev, from_idx, &mut order_rng) {
                let visited_opt = if stabilizing { None } else { Some(&visited) };
                let out = candidate_eval(game, &state, dev, from_idx, target, visited_opt);
                if !stabilizing {
                    let e = visited.entry(dev).or_insert(f64::NEG_INFINITY);
                    *e = e.max(out.member_value_after);
                }
                if !strictly_better(out.pref_after, pref_now)
                    || out.total_after < state.total - value_eps(state.total)
                {
                    continue;
                }

                // Tentatively apply and verify exactly.
                let saved_blocks = state.blocks.clone();
                let value_before = state.total;
                state.blocks[from_idx].members.remove(&dev);
                let to_id = match target {
                    Target::Existing(t) => {
                        state.blocks[t].members.insert(dev);
                        state.blocks[t].id
                    }
                    Target::Fresh => {
                        let id = state.next_id;
                        state.blocks.push(Block {
                            id,
                            level: game.device_level(dev),
                            members: [dev].into_iter().collect(),
                        });
                        id
                    }
                };
                let from_id = state.blocks[from_idx].id;
                state.blocks.retain(|b| !b.members.is_empty());
                let (evals, weights, weight_sum, total) = full_eval(game, &state.blocks);
                if total < value_before - value_eps(value_before) {
                    // The linear screen missed a participation shift; undo.
                    state.blocks = saved_blocks;
                    let (evals, weights, weight_sum, total) = full_eval(game, &state.blocks);
                    state.evals = evals;
                    state.weights = weights;
                    state.weight_sum = weight_sum;
                    state.total = total;
                    if target == Target::Fresh {
                        state.next_id += 1; // burn the id; trace ids stay unique
                    }
                    continue;
                }
                state.evals = evals;
                state.weights = weights;
                state.weight_sum = weight_sum;
                state.total = total;
                if target == Target::Fresh {
                    state.next_id += 1;
                }
                accepted += 1;
                if accepted > game.max_iters() {
                    return Err(Error::NonConvergence {
                        max_iters: game.max_iters(),
                        accepted,
                    });
                }
                trace.push(SwitchRecord {
                    iter: accepted,
                    device: dev,
                    from_coalition: from_id,
                    to_coalition: to_id,
                    value_before,
                    value_after: state.total,
                });
                any = true;
                break;
            }
        }

        if !any {
            if stabilizing {
                break;
            }
            // Quiescent under the visited-set screen: finish with sweeps
            // that drop it, so the result is stable against every
            // unilateral deviation.
            stabilizing = true;
        }
    }

    Ok((state, trace))
}

/// Exhaustive unilateral-deviation check: the partition is stable iff no
/// device strictly improves its preference by moving to another coalition
/// (or a fresh singleton) without decreasing the market value.
fn engine_is_stable<G: GameModel>(game: &G, blocks: &[Block]) -> bool {
    let (evals, weights, weight_sum, total) = full_eval(game, blocks);
    let state = EngineState {
        blocks: blocks.to_vec(),
        evals,
        weights,
        weight_sum,
        total,
        next_id: usize::MAX,
    };
    let mut probe_rng = rng::rng(0);
    for dev in 0..game.num_devices() {
        let from_idx = match state.blocks.iter().position(|b| b.members.contains(&dev)) {
            Some(i) => i,
            None => continue,
        };
        let pref_now = state.evals[from_idx]
            .preferences
            .get(&dev)
            .copied()
            .unwrap_or(0.0);
        for target in candidate_targets(game, &state, dev, from_idx, &mut probe_rng) {
            let out = candidate_eval(game, &state, dev, from_idx, target, None);
            if !strictly_better(out.pref_after, pref_now)
                || out.total_after < state.total - value_eps(state.total)
            {
                continue;
            }
            // Confirm against an exact post-move evaluation, mirroring the
            // solver's accept rule.
            let mut blocks_after: Vec<Block> = state.blocks.clone();
            blocks_after[from_idx].members.remove(&dev);
            match target {
                Target::Existing(t) => {
                    blocks_after[t].members.insert(dev);
                }
                Target::Fresh => blocks_after.push(Block {
                    id: usize::MAX - 1,
                    level: game.device_level(dev),
                    members: [dev].into_iter().collect(),
                }),
            }
            blocks_after.retain(|b| !b.members.is_empty());
            let (_, _, _, exact_total) = full_eval(game, &blocks_after);
            if exact_total >= state.total - value_eps(state.total) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Market game
// ---------------------------------------------------------------------------

struct MarketGame<'a> {
    devices: &'a [DeviceProfile],
    g_influence: &'a [Vec<f64>],
    params: &'a MarketParams,
    levels: &'a [usize],
}

impl MarketGame<'_> {
    fn device_for_eval(&self) -> Vec<DeviceProfile> {
        // Levels come from discovery; keep profiles aligned.
        self.devices
            .iter()
            .zip(self.levels)
            .map(|(d, &lvl)| {
                let mut d = d.clone();
                d.dtype.level = lvl;
                d
            })
            .collect()
    }
}

struct PreparedMarket<'a> {
    devices: Vec<DeviceProfile>,
    g_influence: &'a [Vec<f64>],
    params: &'a MarketParams,
    /// Device sample-id sets are pairwise disjoint, so union counts are
    /// plain sums; detected once per solve.
    disjoint_ids: bool,
    /// Per device: its influence column is all zero, so peer-cost scans
    /// can be skipped entirely.
    influence_free: Vec<bool>,
}

impl PreparedMarket<'_> {
    fn influence_free_columns(g: &[Vec<f64>]) -> Vec<bool> {
        (0..g.len())
            .map(|j| g.iter().all(|row| row[j] == 0.0))
            .collect()
    }

    fn detect_disjoint(devices: &[DeviceProfile]) -> bool {
        let total: usize = devices.iter().map(DeviceProfile::samples).sum();
        let mut union = std::collections::BTreeSet::new();
        for d in devices {
            union.extend(d.sample_ids.iter().copied());
        }
        union.len() == total
    }

    fn union_of(&self, members: &BTreeSet<usize>) -> usize {
        if self.disjoint_ids {
            members.iter().map(|&m| self.devices[m].samples()).sum()
        } else {
            union_count(members, &self.devices)
        }
    }
}

impl GameModel for PreparedMarket<'_> {
    fn num_devices(&self) -> usize {
        self.devices.len()
    }

    fn total_budget(&self) -> f64 {
        self.params.total_budget
    }

    fn max_iters(&self) -> usize {
        self.params.max_iters
    }

    fn device_level(&self, m: usize) -> usize {
        self.devices[m].dtype.level
    }

    fn level_gated(&self) -> bool {
        true
    }

    fn weight(&self, members: &BTreeSet<usize>) -> f64 {
        self.union_of(members) as f64
    }

    fn eval_block(
        &self,
        members: &BTreeSet<usize>,
        level: usize,
        budget: f64,
        visited: Option<&BTreeMap<usize, f64>>,
    ) -> BlockEval {
        let a = super::assess_coalition_full(
            members,
            level,
            budget,
            &self.devices,
            self.g_influence,
            &self.params.constraints,
            self.params.comm_rounds,
            self.params.unit_comm_cost,
            visited,
            Some(self.union_of(members)),
            Some(&self.influence_free),
        );
        let zip = |vals: &[f64]| -> BTreeMap<usize, f64> {
            a.members.iter().copied().zip(vals.iter().copied()).collect()
        };
        BlockEval {
            value: a.value,
            feasible: a.feasible,
            alpha: a.alpha,
            beta: a.beta,
            payments: zip(&a.payments),
            preferences: zip(&a.preferences),
            member_values: zip(&a.member_values),
            participation: a
                .members
                .iter()
                .copied()
                .zip(a.participation.iter().copied())
                .collect(),
        }
    }

    fn exact_candidates(&self) -> bool {
        false
    }
}

/// Solve a market instance: discover types, form coalitions by iterated
/// switch operations, and settle contract prices.
pub fn majp_solve(instance: &MarketInstance, seed: u64) -> Result<SolveTrace> {
    instance.validate()?;
    let params = &instance.params;

    // Phase I.
    let discovery = discover_types(
        &instance.devices,
        params.k_levels,
        params.unit_comm_cost,
        rng::derive(seed, 1),
    );

    let game_src = MarketGame {
        devices: &instance.devices,
        g_influence: &instance.g_influence,
        params,
        levels: &discovery.levels,
    };
    let prepared_devices = game_src.device_for_eval();
    let disjoint_ids = PreparedMarket::detect_disjoint(&prepared_devices);
    let game = PreparedMarket {
        devices: prepared_devices,
        g_influence: instance.g_influence.as_slice(),
        params,
        disjoint_ids,
        influence_free: PreparedMarket::influence_free_columns(&instance.g_influence),
    };

    // Initial partition: one proxy coalition per level, devices assigned
    // at random (they have not sorted themselves yet).
    let mut assign_rng = rng::stream_rng(seed, 2);
    let mut proxy: Vec<(usize, BTreeSet<usize>)> = (1..=params.k_levels)
        .map(|level| (level, BTreeSet::new()))
        .collect();
    for m in 0..game.num_devices() {
        let k = assign_rng.random_range(0..params.k_levels);
        proxy[k].1.insert(m);
    }

    // Phase II.
    let (state, trace) = run_engine(&game, proxy, rng::derive(seed, 3))?;

    // Phase III.
    Ok(finish_market_trace(
        &game, state, trace, discovery.comm_cost, discovery.levels,
    ))
}

fn finish_market_trace<G: GameModel>(
    game: &G,
    state: EngineState,
    trace: Vec<SwitchRecord>,
    discovery_cost: f64,
    levels: Vec<usize>,
) -> SolveTrace {
    let m = game.num_devices();
    let mut final_prices = vec![0.0; m];
    let mut final_participation = vec![false; m];
    let mut coalitions = Vec::with_capacity(state.blocks.len());
    for (b, (e, &w)) in state
        .blocks
        .iter()
        .zip(state.evals.iter().zip(&state.weights))
    {
        let budget = if state.weight_sum > 0.0 {
            game.total_budget() * w / state.weight_sum
        } else {
            0.0
        };
        for (&dev, &p) in &e.payments {
            final_prices[dev] = p;
        }
        for (&dev, &a) in &e.participation {
            final_participation[dev] = a;
        }
        coalitions.push(Coalition {
            members: b.members.clone(),
            type_level: b.level,
            budget,
        });
    }
    SolveTrace {
        iterations: trace,
        final_partition: Partition {
            coalitions,
            total_budget: game.total_budget(),
        },
        final_prices,
        final_participation,
        levels,
        total_value: state.total,
        discovery_cost,
    }
}

/// Check a market partition for Nash stability under the solver's own
/// admissibility rule.
pub fn is_nash_stable(instance: &MarketInstance, partition: &Partition) -> Result<bool> {
    instance.validate()?;
    partition.validate(instance.devices.len())?;
    let levels: Vec<usize> = instance
        .devices
        .iter()
        .map(|d| quantize_level(d.dtype.phi, instance.params.k_levels))
        .collect();
    let game_src = MarketGame {
        devices: &instance.devices,
        g_influence: &instance.g_influence,
        params: &instance.params,
        levels: &levels,
    };
    let prepared_devices = game_src.device_for_eval();
    let disjoint_ids = PreparedMarket::detect_disjoint(&prepared_devices);
    let game = PreparedMarket {
        devices: prepared_devices,
        g_influence: instance.g_influence.as_slice(),
        params: &instance.params,
        disjoint_ids,
        influence_free: PreparedMarket::influence_free_columns(&instance.g_influence),
    };
    let blocks: Vec<Block> = partition
        .coalitions
        .iter()
        .enumerate()
        .map(|(i, c)| Block {
            id: i,
            level: c.type_level,
            members: c.members.clone(),
        })
        .collect();
    Ok(engine_is_stable(&game, &blocks))
}

// ---------------------------------------------------------------------------
// Table games (explicit coalition values, used for demonstrations/tests)
// ---------------------------------------------------------------------------

/// A coalition game given by an explicit value table: unlisted coalitions
/// are worth zero, every coalition is feasible, and members split the
/// value equally as their preference.
#[derive(Debug, Clone)]
pub struct TableGame {
    pub num_devices: usize,
    pub max_iters: usize,
    values: BTreeMap<Vec<usize>, f64>,
    levels: Vec<usize>,
}

impl TableGame {
    pub fn new(num_devices: usize) -> Self {
        TableGame {
            num_devices,
            max_iters: 10_000,
            values: BTreeMap::new(),
            levels: (1..=num_devices).collect(),
        }
    }

    pub fn set_value(&mut self, members: &[usize], value: f64) {
        let mut key: Vec<usize> = members.to_vec();
        key.sort_unstable();
        self.values.insert(key, value);
    }

    pub fn value_of(&self, members: &BTreeSet<usize>) -> f64 {
        let key: Vec<usize> = members.iter().copied().collect();
        self.values.get(&key).copied().unwrap_or(0.0)
    }

    /// The four-device demonstration game: only {0,1} (worth 1) and {0,2}
    /// (worth 2) are productive.
    pub fn four_device_demo() -> Self {
        let mut g = TableGame::new(4);
        g.set_value(&[0, 1], 1.0);
        g.set_value(&[0, 2], 2.0);
        g.levels = vec![1, 2, 1, 3];
        g
    }

    fn as_model(&self) -> TableModel<'_> {
        TableModel { game: self }
    }

    /// Run the switch-operation solver from the all-singletons partition.
    pub fn solve(&self, seed: u64) -> Result<SolveTrace> {
        let initial: Vec<(usize, BTreeSet<usize>)> = (0..self.num_devices)
            .map(|m| (self.levels[m], [m].into_iter().collect()))
            .collect();
        let model = self.as_model();
        let (state, trace) = run_engine(&model, initial, seed)?;
        Ok(finish_market_trace(
            &model,
            state,
            trace,
            0.0,
            self.levels.clone(),
        ))
    }

    pub fn is_nash_stable(&self, partition: &Partition) -> bool {
        let blocks: Vec<Block> = partition
            .coalitions
            .iter()
            .enumerate()
            .map(|(i, c)| Block {
                id: i,
                level: c.type_level,
                members: c.members.clone(),
            })
            .collect();
        engine_is_stable(&self.as_model(), &blocks)
    }
}

struct TableModel<'a> {
    game: &'a TableGame,
}

impl GameModel for TableModel<'_> {
    fn num_devices(&self) -> usize {
        self.game.num_devices
    }

    fn total_budget(&self) -> f64 {
        0.0
    }

    fn max_iters(&self) -> usize {
        self.game.max_iters
    }

    fn device_level(&self, m: usize) -> usize {
        self.game.levels[m]
    }

    fn level_gated(&self) -> bool {
        false
    }

    fn weight(&self, _members: &BTreeSet<usize>) -> f64 {
        1.0
    }

    fn eval_block(
        &self,
        members: &BTreeSet<usize>,
        _level: usize,
        _budget: f64,
        _visited: Option<&BTreeMap<usize, f64>>,
    ) -> BlockEval {
        let value = self.game.value_of(members);
        let share = value / members.len() as f64;
        let per_member: BTreeMap<usize, f64> = members.iter().map(|&m| (m, share)).collect();
        BlockEval {
            value,
            feasible: true,
            alpha: 0.0,
            beta: value,
            payments: per_member.clone(),
            preferences: per_member.clone(),
            member_values: per_member,
            participation: members.iter().map(|&m| (m, true)).collect(),
        }
    }

    fn exact_candidates(&self) -> bool {
        true
    }
}
