//! Passive guidance: searching stiffness maps with the simulator as oracle.
//!
//! A goal is a weighted sum of terms evaluated on one simulated run. Small
//! constrained layout families are enumerated exhaustively; the full 3^16
//! space falls back to greedy single-cell flips with seeded restarts.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{min_initiation_tilt, simulate, Calibration, FrictionModel, Scenario, Termination};
use crate::error::{Error, Result};
use crate::map::{all_cells, cell_center, cell_index, index_cell, Cell, StiffnessMap, CELL_COUNT, GRID, PITCH_MM, TILE_SPAN_MM};

/// Densities with calibrated mechanics and friction.
pub const CALIBRATED_DENSITIES: [f64; 3] = [0.07, 0.10, 0.20];

/// Added to the stop-in-cell distance when the object leaves the tile.
pub const OFF_EDGE_PENALTY_MM: f64 = TILE_SPAN_MM;

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalTerm {
    /// Distance in mm from the stop point to the centre of `cell`
    /// (row-major index).
    StopInCell {
        cell: usize,
        #[serde(default = "unit_weight")]
        weight: f64,
    },
    /// Exit speed above `limit_mm_s`, in mm/s.
    MaxExitSpeed {
        limit_mm_s: f64,
        #[serde(default = "unit_weight")]
        weight: f64,
    },
    /// Time integral of the distance to the corridor, in mm·s.
    Corridor {
        cells: Vec<usize>,
        #[serde(default = "unit_weight")]
        weight: f64,
    },
}

impl GoalTerm {
    pub fn weight(&self) -> f64 {
        match self {
            Self::StopInCell { weight, .. } | Self::MaxExitSpeed { weight, .. } | Self::Corridor { weight, .. } => {
                *weight
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceGoal {
    pub terms: Vec<GoalTerm>,
    /// Weight on the initiation tilt (degrees) at the start position.
    pub effort_weight: f64,
}

impl GuidanceGoal {
    pub fn stop_in_cell(cell: Cell) -> Self {
        Self {
            terms: vec![GoalTerm::StopInCell {
                cell: cell_index(cell),
                weight: 1.0,
            }],
            effort_weight: 0.0,
        }
    }

    pub fn effort_only() -> Self {
        Self {
            terms: Vec::new(),
            effort_weight: 1.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check_cell = |c: usize, what: &str| {
            if c >= CELL_COUNT {
                v.push(format!("goal {what} cell {c} is off the {GRID}x{GRID} grid"));
            }
        };
        for term in &self.terms {
            match term {
                GoalTerm::StopInCell { cell, .. } => check_cell(*cell, "stop_in_cell"),
                GoalTerm::Corridor { cells, .. } => {
                    for c in cells {
                        check_cell(*c, "corridor");
                    }
                }
                GoalTerm::MaxExitSpeed { .. } => {}
            }
        }
        for term in &self.terms {
            if let GoalTerm::Corridor { cells, .. } = term {
                if cells.is_empty() {
                    v.push("goal corridor needs at least one cell".into());
                }
            }
            if !(term.weight() >= 0.0) {
                v.push(format!("goal weight {} must be non-negative", term.weight()));
            }
        }
        if !(self.effort_weight >= 0.0) {
            v.push(format!("effort weight {} must be non-negative", self.effort_weight));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    /// Weighted contribution of each goal term, in goal order.
    pub term_costs: Vec<f64>,
    pub effort_cost: f64,
    pub termination: Termination,
    /// Why the candidate is infeasible, when the cost is infinite.
    pub infeasible: Option<String>,
}

fn distance_to_cell(p: (f64, f64), cell: Cell) -> f64 {
    let x0 = cell.1 as f64 * PITCH_MM;
    let y0 = cell.0 as f64 * PITCH_MM;
    let dx = (x0 - p.0).max(p.0 - (x0 + PITCH_MM)).max(0.0);
    let dy = (y0 - p.1).max(p.1 - (y0 + PITCH_MM)).max(0.0);
    dx.hypot(dy)
}

/// Cost of running `template` on `map`; deterministic in all inputs.
pub fn evaluate(
    map: &StiffnessMap,
    template: &Scenario,
    goal: &GuidanceGoal,
    calibration: &Calibration,
) -> Result<Evaluation> {
    goal.validate()?;
    let mut scenario = template.clone();
    scenario.map = *map;
    let out = simulate(&scenario, calibration)?;
    if let Termination::Densification { t_s, cell, load_n, limit_n } = out.termination {
        return Ok(Evaluation {
            cost: f64::INFINITY,
            term_costs: vec![f64::INFINITY; goal.terms.len()],
            effort_cost: 0.0,
            termination: out.termination,
            infeasible: Some(format!(
                "densification at t = {t_s:.3} s in cell {cell:?}: load {load_n:.3} N exceeds {limit_n:.3} N"
            )),
        });
    }
    let last = *out.final_state();
    let stop = last.position();
    let off_edge = match out.termination {
        Termination::OffEdge { x_mm, y_mm, speed_mm_s, .. } => Some(((x_mm, y_mm), speed_mm_s)),
        _ => None,
    };
    let dt = scenario.sim.dt_s;
    let term_costs: Vec<f64> = goal
        .terms
        .iter()
        .map(|term| {
            let raw = match term {
                GoalTerm::StopInCell { cell, .. } => {
                    let (cx, cy) = cell_center(index_cell(*cell));
                    match off_edge {
                        Some((p, _)) => (p.0 - cx).hypot(p.1 - cy) + OFF_EDGE_PENALTY_MM,
                        None => (stop.0 - cx).hypot(stop.1 - cy),
                    }
                }
                GoalTerm::MaxExitSpeed { limit_mm_s, .. } => {
                    off_edge.map_or(0.0, |(_, speed)| (speed - limit_mm_s).max(0.0))
                }
                GoalTerm::Corridor { cells, .. } => out
                    .trajectory
                    .samples
                    .iter()
                    .map(|s| {
                        let p = s.state.position();
                        cells
                            .iter()
                            .map(|&c| distance_to_cell(p, index_cell(c)))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum::<f64>()
                    * dt,
            };
            term.weight() * raw
        })
        .collect();
    let start = (scenario.initial.x_mm, scenario.initial.y_mm);
    let effort_cost = if goal.effort_weight > 0.0 {
        goal.effort_weight * min_initiation_tilt(map, &calibration.friction, start)?
    } else {
        0.0
    };
    Ok(Evaluation {
        cost: term_costs.iter().sum::<f64>() + effort_cost,
        term_costs,
        effort_cost,
        termination: out.termination,
        infeasible: None,
    })
}

/// Per-cell initiation tilt in degrees.
pub fn tilt_threshold_profile(map: &StiffnessMap, friction: &FrictionModel) -> [[f64; GRID]; GRID] {
    let mut out = [[0.0; GRID]; GRID];
    for cell in all_cells() {
        out[cell.0][cell.1] = friction.initiation_tilt_deg(map.density(cell));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpace {
    /// One density per column: 3^4 layouts.
    BandedColumns,
    /// Two densities split at a column boundary, plus the uniform maps.
    #[default]
    SplitColumns,
    /// Any density in any cell: 3^16 layouts.
    Full,
}

impl SearchSpace {
    /// Number of distinct layouts before constraints.
    pub fn size(self) -> u64 {
        let k = CALIBRATED_DENSITIES.len() as u64;
        match self {
            Self::BandedColumns => k.pow(GRID as u32),
            Self::SplitColumns => k + k * (k - 1) * (GRID as u64 - 1),
            Self::Full => k.pow(CELL_COUNT as u32),
        }
    }

    /// Every layout in canonical order. Not available for `Full`.
    pub fn enumerate(self) -> Option<Vec<StiffnessMap>> {
        let d = CALIBRATED_DENSITIES;
        match self {
            Self::BandedColumns => {
                let mut out = Vec::new();
                for code in 0..self.size() as usize {
                    let mut cols = [0.0; GRID];
                    let mut rest = code;
                    for c in (0..GRID).rev() {
                        cols[c] = d[rest % d.len()];
                        rest /= d.len();
                    }
                    out.push(StiffnessMap::banded_columns(cols));
                }
                Some(out)
            }
            Self::SplitColumns => {
                let mut out: Vec<StiffnessMap> = d.iter().map(|&v| StiffnessMap::uniform(v)).collect();
                for &a in &d {
                    for &b in &d {
                        if a != b {
                            out.extend((1..GRID).map(|boundary| StiffnessMap::split_columns(a, b, boundary)));
                        }
                    }
                }
                Some(out)
            }
            Self::Full => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSettings {
    pub space: SearchSpace,
    /// Maximum number of distinct candidates simulated.
    pub budget: usize,
    /// Reject maps whose densities do not each form one connected region.
    pub contiguous: bool,
    pub seed: u64,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self {
            space: SearchSpace::default(),
            budget: 200,
            contiguous: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval_idx: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCandidate {
    pub map: StiffnessMap,
    pub contiguous: bool,
    pub printable: bool,
}

impl MapCandidate {
    pub fn new(map: StiffnessMap) -> Self {
        Self {
            map,
            contiguous: map.is_contiguous(),
            printable: map.violations().is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: MapCandidate,
    pub evaluation: Evaluation,
    pub exhaustive: bool,
    pub trace: Vec<TraceEntry>,
}

/// Total order used to pick winners: cost, then row-major densities.
pub fn candidate_cmp(a: (&StiffnessMap, f64), b: (&StiffnessMap, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.lexicographic_cmp(b.0))
}

/// Best of `scored`, independent of its order.
pub fn select_best(scored: &[(StiffnessMap, f64)]) -> Option<(StiffnessMap, f64)> {
    scored
        .iter()
        .copied()
        .min_by(|a, b| candidate_cmp((&a.0, a.1), (&b.0, b.1)))
}

type Code = [u8; CELL_COUNT];

fn encode(map: &StiffnessMap) -> Option<Code> {
    let mut code = [0u8; CELL_COUNT];
    for (slot, v) in code.iter_mut().zip(map.values()) {
        *slot = CALIBRATED_DENSITIES.iter().position(|&d| d == v)? as u8;
    }
    Some(code)
}

struct Search<'a> {
    template: &'a Scenario,
    goal: &'a GuidanceGoal,
    calibration: &'a Calibration,
    budget: usize,
    seen: HashMap<Code, f64>,
    scored: Vec<(StiffnessMap, Evaluation)>,
    trace: Vec<TraceEntry>,
}

impl Search<'_> {
    fn remaining(&self) -> usize {
        self.budget - self.trace.len()
    }

    /// Evaluates the unseen maps of `batch` in parallel, recording them in
    /// batch order so the trace does not depend on scheduling.
    fn run(&mut self, batch: &[StiffnessMap]) -> Result<()> {
        let mut fresh: Vec<StiffnessMap> = Vec::new();
        for map in batch {
            let code = encode(map).expect("candidates use calibrated densities");
            if !self.seen.contains_key(&code) && !fresh.iter().any(|m| m == map) {
                fresh.push(*map);
            }
        }
        fresh.truncate(self.remaining());
        let evals: Vec<Evaluation> = fresh
            .par_iter()
            .map(|m| evaluate(m, self.template, self.goal, self.calibration))
            .collect::<Result<_>>()?;
        for (map, eval) in fresh.into_iter().zip(evals) {
            self.seen.insert(encode(&map).expect("encoded above"), eval.cost);
            self.trace.push(TraceEntry {
                eval_idx: self.trace.len(),
                cost: eval.cost,
            });
            self.scored.push((map, eval));
        }
        Ok(())
    }

    fn cost(&self, map: &StiffnessMap) -> Option<f64> {
        self.seen.get(&encode(map)?).copied()
    }
}

fn single_flips(map: &StiffnessMap, contiguous: bool) -> Vec<StiffnessMap> {
    let mut out = Vec::new();
    for i in 0..CELL_COUNT {
        let cell = index_cell(i);
        for &d in &CALIBRATED_DENSITIES {
            if d != map.density(cell) {
                let mut next = *map;
                next.set(cell, d);
                if !contiguous || next.is_contiguous() {
                    out.push(next);
                }
            }
        }
    }
    out
}

fn restart_map(rng: &mut ChaCha8Rng, contiguous: bool) -> StiffnessMap {
    let d = CALIBRATED_DENSITIES;
    if contiguous {
        let a = d[rng.gen_range(0..d.len())];
        let b = d[rng.gen_range(0..d.len())];
        StiffnessMap::split_columns(a, b, rng.gen_range(1..GRID))
    } else {
        let mut map = StiffnessMap::uniform(d[0]);
        for cell in all_cells() {
            map.set(cell, d[rng.gen_range(0..d.len())]);
        }
        map
    }
}

/// Best map for `goal` within `settings.space`.
///
/// The space is enumerated when it fits in the budget. Otherwise greedy
/// descent over single-cell flips runs from the uniform maps and then from
/// seeded random starts until the budget is spent; among equal-cost flips
/// the one at the lowest cell index wins.
pub fn optimize(
    goal: &GuidanceGoal,
    template: &Scenario,
    calibration: &Calibration,
    settings: &OptimizeSettings,
) -> Result<OptimizeResult> {
    goal.validate()?;
    template.validate()?;
    if settings.budget == 0 {
        return Err(Error::Contract("optimizer budget must be at least 1".into()));
    }
    let mut search = Search {
        template,
        goal,
        calibration,
        budget: settings.budget,
        seen: HashMap::new(),
        scored: Vec::new(),
        trace: Vec::new(),
    };
    let feasible = |m: &StiffnessMap| !settings.contiguous || m.is_contiguous();

    let enumerated = settings.space.enumerate().map(|all| all.into_iter().filter(feasible).collect::<Vec<_>>());
    let exhaustive = matches!(&enumerated, Some(all) if all.len() <= settings.budget);
    if exhaustive {
        let all = enumerated.expect("checked");
        if all.is_empty() {
            return Err(Error::EmptySearchSpace(format!(
                "{:?} with contiguity = {}",
                settings.space, settings.contiguous
            )));
        }
        search.run(&all)?;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut starts = CALIBRATED_DENSITIES.iter().map(|&d| StiffnessMap::uniform(d)).collect::<Vec<_>>().into_iter();
        let in_space = |m: &StiffnessMap| match &enumerated {
            Some(all) => all.contains(m),
            None => feasible(m),
        };
        let mut stalled_restarts = 0;
        while search.remaining() > 0 && stalled_restarts < 1000 {
            let start = starts.next().unwrap_or_else(|| restart_map(&mut rng, settings.contiguous));
            if !in_space(&start) || search.cost(&start).is_some() {
                stalled_restarts += 1;
                continue;
            }
            stalled_restarts = 0;
            search.run(&[start])?;
            let mut current = start;
            while search.remaining() > 0 {
                let here = search.cost(&current).expect("evaluated");
                let neighbours: Vec<StiffnessMap> =
                    single_flips(&current, settings.contiguous).into_iter().filter(|m| in_space(m)).collect();
                search.run(&neighbours)?;
                // First minimum in cell-index order.
                let mut best: Option<(StiffnessMap, f64)> = None;
                for n in &neighbours {
                    if let Some(c) = search.cost(n) {
                        if best.is_none_or(|(_, b)| c < b) {
                            best = Some((*n, c));
                        }
                    }
                }
                match best {
                    Some((next, c)) if c < here => current = next,
                    _ => break,
                }
            }
        }
        if search.scored.is_empty() {
            return Err(Error::EmptySearchSpace(format!(
                "no feasible start found in {:?} with contiguity = {}",
                settings.space, settings.contiguous
            )));
        }
    }

    let scored: Vec<(StiffnessMap, f64)> = search.scored.iter().map(|(m, e)| (*m, e.cost)).collect();
    let (best_map, _) = select_best(&scored).expect("non-empty");
    let evaluation = search
        .scored
        .iter()
        .find(|(m, _)| *m == best_map)
        .map(|(_, e)| e.clone())
        .expect("best was scored");
    Ok(OptimizeResult {
        best: MapCandidate::new(best_map),
        evaluation,
        exhaustive,
        trace: search.trace,
    })
}

pub fn write_trace<W: Write>(writer: W, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eval_idx", "cost"])?;
    for e in trace {
        w.write_record([e.eval_idx.to_string(), e.cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{InitialState, TiltSchedule};

    fn impulse_template(x0: f64, v0: f64) -> Scenario {
        let mut s = Scenario::new(StiffnessMap::uniform(0.10));
        s.tilt_schedule = TiltSchedule::flat();
        s.initial = InitialState {
            x_mm: x0,
            y_mm: cell_center((1, 0)).1,
            vx_mm_s: v0,
            vy_mm_s: 0.0,
        };
        s.sim.duration_s = 3.0;
        s
    }

    #[test]
    fn space_sizes_match_enumeration() {
        for space in [SearchSpace::BandedColumns, SearchSpace::SplitColumns] {
            let all = space.enumerate().unwrap();
            assert_eq!(all.len() as u64, space.size());
            let mut sorted = all.clone();
            sorted.sort_by(|a, b| a.lexicographic_cmp(b));
            sorted.dedup();
            assert_eq!(sorted.len(), all.len(), "{space:?} has duplicates");
        }
        assert_eq!(SearchSpace::Full.size(), 43_046_721);
    }

    #[test]
    fn resting_object_in_its_own_cell_costs_nothing() {
        let c = Calibration::builtin();
        let start = cell_center((1, 1));
        let mut template = impulse_template(start.0, 0.0);
        template.initial.y_mm = start.1;
        let e = evaluate(&StiffnessMap::uniform(0.20), &template, &GuidanceGoal::stop_in_cell((1, 1)), &c).unwrap();
        assert_eq!(e.cost, 0.0);
    }

    #[test]
    fn mid_density_best_for_a_110_mm_stop() {
        // Column-0 centre to column-3 centre is 112.5 mm.
        let c = Calibration::builtin();
        let template = impulse_template(18.75, 300.0);
        let goal = GuidanceGoal::stop_in_cell((1, 3));
        let costs: Vec<f64> = CALIBRATED_DENSITIES
            .iter()
            .map(|&d| evaluate(&StiffnessMap::uniform(d), &template, &goal, &c).unwrap().cost)
            .collect();
        assert!(costs[1] < costs[0] && costs[1] < costs[2], "{costs:?}");
        assert!(costs[2] > OFF_EDGE_PENALTY_MM);
    }

    #[test]
    fn effort_alone_prefers_stiff_maps() {
        let c = Calibration::builtin();
        let template = impulse_template(75.0, 0.0);
        let goal = GuidanceGoal::effort_only();
        let costs: Vec<f64> = CALIBRATED_DENSITIES
            .iter()
            .map(|&d| evaluate(&StiffnessMap::uniform(d), &template, &goal, &c).unwrap().cost)
            .collect();
        assert!((costs[2] - 5.0).abs() < 1e-9 && (costs[0] - 12.7).abs() < 1e-9);
        assert!(costs[2] < costs[1] && costs[1] < costs[0]);
    }

    #[test]
    fn densification_is_infinite_cost() {
        let c = Calibration::builtin();
        let mut template = impulse_template(75.0, 0.0);
        template.object.footprint = crate::dynamics::Footprint::Point;
        let e = evaluate(&StiffnessMap::uniform(0.07), &template, &GuidanceGoal::stop_in_cell((1, 1)), &c).unwrap();
        assert!(e.cost.is_infinite());
        assert!(e.infeasible.unwrap().contains("densification"));
    }

    #[test]
    fn threshold_profile_checkerboard() {
        let c = Calibration::builtin();
        let mut map = StiffnessMap::uniform(0.20);
        for cell in all_cells().filter(|c| (c.0 + c.1) % 2 == 1) {
            map.set(cell, 0.07);
        }
        let p = tilt_threshold_profile(&map, &c.friction);
        assert!((p[0][0] - 5.0).abs() < 1e-9);
        assert!((p[0][1] - 12.7).abs() < 1e-9);
        assert!((p[3][2] - 12.7).abs() < 1e-9);
    }

    #[test]
    fn ties_go_to_lower_map() {
        let a = StiffnessMap::uniform(0.07);
        let b = StiffnessMap::uniform(0.10);
        assert_eq!(select_best(&[(b, 1.0), (a, 1.0)]).unwrap().0, a);
        assert_eq!(select_best(&[(b, 0.5), (a, 1.0)]).unwrap().0, b);
    }

    #[test]
    fn corridor_distance() {
        assert_eq!(distance_to_cell((10.0, 10.0), (0, 0)), 0.0);
        assert!((distance_to_cell((80.0, 10.0), (0, 0)) - 42.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_search_respects_budget_and_contiguity() {
        let c = Calibration::builtin();
        let template = impulse_template(18.75, 300.0);
        let goal = GuidanceGoal::stop_in_cell((1, 2));
        let settings = OptimizeSettings {
            space: SearchSpace::Full,
            budget: 40,
            contiguous: true,
            seed: 7,
        };
        let r = optimize(&goal, &template, &c, &settings).unwrap();
        assert!(!r.exhaustive);
        assert!(r.trace.len() <= 40);
        assert!(r.best.contiguous && r.best.printable);
        let again = optimize(&goal, &template, &c, &settings).unwrap();
        assert_eq!(r, again);
    }
}
