//! Quasi-static mechanics of gyroid lattice pads.
//!
//! The loading branch is linear up to [`LINEAR_LIMIT_MM`] and then follows a
//! polynomial stiffening term pinned so that the force at
//! [`DENSIFICATION_MM`] equals the measured operational force range:
//!
//! ```text
//! F(d) = k0·d                         d <= d_lin
//! F(d) = k0·d + c·(d - d_lin)^p       d_lin < d <= d_dens
//! ```
//!
//! Unloading scales the loading curve down by a sine bump that vanishes at
//! both ends of the stroke, so every cycle closes.

use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PRINTABLE_DENSITY: f64 = 0.07;
pub const MAX_PRINTABLE_DENSITY: f64 = 0.30;
pub const MIN_CELL_SIZE_MM: f64 = 2.2;
pub const MAX_CELL_SIZE_MM: f64 = 4.0;
pub const REFERENCE_CELL_SIZE_MM: f64 = 3.0;

pub const DEFAULT_THICKNESS_MM: f64 = 12.0;
pub const DEFAULT_PLANAR_SIDE_MM: f64 = 37.5;

/// End of the linear region used for effective stiffness.
pub const LINEAR_LIMIT_MM: f64 = 2.0;
/// 50 % strain of a 12 mm pad; beyond this the response is not trusted.
pub const DENSIFICATION_MM: f64 = 6.0;
pub const DEFAULT_STIFFENING_EXPONENT: f64 = 3.0;

/// Force tolerance for curve inversion.
pub const INVERSION_TOLERANCE_N: f64 = 1e-9;
pub const INVERSION_MAX_ITERATIONS: usize = 200;

const BUILTIN_ANCHORS: &str = include_str!("../data/lattice_anchors.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    Gyroid,
    SchwarzD,
    XCellStrut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub topology: Topology,
    pub cell_size_mm: f64,
    pub relative_density: f64,
    pub thickness_mm: f64,
    pub planar_side_mm: f64,
}

impl LatticeSpec {
    pub fn gyroid(cell_size_mm: f64, relative_density: f64) -> Self {
        Self {
            topology: Topology::Gyroid,
            cell_size_mm,
            relative_density,
            thickness_mm: DEFAULT_THICKNESS_MM,
            planar_side_mm: DEFAULT_PLANAR_SIDE_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PrintabilityViolation {
    /// Below 7 % the lattice cannot support itself.
    DensityBelowFloor { density: f64 },
    /// Above 30 % uncured resin gets trapped in the pores.
    DensityAboveCeiling { density: f64 },
    CellSizeBelowMinimum { cell_size_mm: f64 },
    CellSizeAboveMaximum { cell_size_mm: f64 },
    NonPositiveThickness { thickness_mm: f64 },
}

impl std::fmt::Display for PrintabilityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DensityBelowFloor { density } => write!(
                f,
                "relative density {density} below the 7 % floor: lattice cannot support itself"
            ),
            Self::DensityAboveCeiling { density } => write!(
                f,
                "relative density {density} above the 30 % ceiling: resin trapping"
            ),
            Self::CellSizeBelowMinimum { cell_size_mm } => {
                write!(f, "cell size {cell_size_mm} mm below 2.2 mm")
            }
            Self::CellSizeAboveMaximum { cell_size_mm } => {
                write!(f, "cell size {cell_size_mm} mm above 4.0 mm")
            }
            Self::NonPositiveThickness { thickness_mm } => {
                write!(f, "thickness {thickness_mm} mm must be positive")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrintabilityReport {
    pub violations: Vec<PrintabilityViolation>,
}

impl PrintabilityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_density(density: f64) -> Option<PrintabilityViolation> {
    if !(density >= MIN_PRINTABLE_DENSITY) {
        Some(PrintabilityViolation::DensityBelowFloor { density })
    } else if density > MAX_PRINTABLE_DENSITY {
        Some(PrintabilityViolation::DensityAboveCeiling { density })
    } else {
        None
    }
}

pub fn check_printability(spec: &LatticeSpec) -> PrintabilityReport {
    let mut violations = Vec::new();
    violations.extend(check_density(spec.relative_density));
    if spec.cell_size_mm < MIN_CELL_SIZE_MM {
        violations.push(PrintabilityViolation::CellSizeBelowMinimum {
            cell_size_mm: spec.cell_size_mm,
        });
    } else if spec.cell_size_mm > MAX_CELL_SIZE_MM {
        violations.push(PrintabilityViolation::CellSizeAboveMaximum {
            cell_size_mm: spec.cell_size_mm,
        });
    }
    if !(spec.thickness_mm > 0.0) {
        violations.push(PrintabilityViolation::NonPositiveThickness {
            thickness_mm: spec.thickness_mm,
        });
    }
    PrintabilityReport { violations }
}

/// One measured row: density plus the four characterization metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub relative_density: f64,
    #[serde(rename = "k0_n_per_mm")]
    pub k0: f64,
    #[serde(rename = "f_op_n")]
    pub f_op: f64,
    #[serde(rename = "sensitivity_uh_per_n")]
    pub sensitivity: f64,
    #[serde(rename = "hysteresis_pct")]
    pub hysteresis_pct: f64,
}

impl Anchor {
    pub fn get(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Stiffness => self.k0,
            Quantity::ForceRange => self.f_op,
            Quantity::Sensitivity => self.sensitivity,
            Quantity::Hysteresis => self.hysteresis_pct,
        }
    }
}

pub fn builtin_anchors() -> Vec<Anchor> {
    read_anchors(BUILTIN_ANCHORS.as_bytes()).expect("built-in anchor table is well formed")
}

pub fn read_anchors<R: Read>(reader: R) -> Result<Vec<Anchor>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let anchors = rdr.deserialize().collect::<std::result::Result<Vec<Anchor>, _>>()?;
    Ok(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Stiffness,
    ForceRange,
    Sensitivity,
    Hysteresis,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::Stiffness,
        Quantity::ForceRange,
        Quantity::Sensitivity,
        Quantity::Hysteresis,
    ];
}

/// `q(rho) = coefficient * rho^exponent`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityScalingLaw {
    pub coefficient: f64,
    pub exponent: f64,
}

impl DensityScalingLaw {
    pub fn eval(&self, density: f64) -> f64 {
        self.coefficient * density.powf(self.exponent)
    }

    /// Least-squares line through `(ln rho, ln q)`.
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Calibration(format!(
                "need at least 2 points for a power law, got {}",
                points.len()
            )));
        }
        if let Some(&(rho, q)) = points.iter().find(|(rho, q)| !(*rho > 0.0 && *q > 0.0)) {
            return Err(Error::Calibration(format!(
                "non-positive value in power-law fit: density {rho}, value {q}"
            )));
        }
        let n = points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        let x_mean = xs.iter().sum::<f64>() / n;
        let y_mean = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::Calibration("anchor densities must be distinct".into()));
        }
        let sxy: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .sum();
        let exponent = sxy / sxx;
        Ok(Self {
            coefficient: (y_mean - exponent * x_mean).exp(),
            exponent,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResidual {
    pub relative_density: f64,
    pub observed: f64,
    pub predicted: f64,
    /// `(predicted - observed) / observed`
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub quantity: Quantity,
    pub law: DensityScalingLaw,
    pub residuals: Vec<AnchorResidual>,
}

/// Calibrated density dependence of all four lattice metrics.
///
/// Queries at an anchor density return the anchor value itself; between
/// anchors the value is interpolated on log-log axes; outside the anchored
/// range the fitted power-law exponent extrapolates from the nearest anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeCalibration {
    /// Sorted by density.
    pub anchors: Vec<Anchor>,
    pub fits: Vec<ScalingFit>,
    pub stiffening_exponent: f64,
}

pub fn calibrate_from_anchors(anchors: &[Anchor]) -> Result<LatticeCalibration> {
    if anchors.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 anchors, got {}",
            anchors.len()
        )));
    }
    for a in anchors {
        let values = [a.relative_density, a.k0, a.f_op, a.sensitivity, a.hysteresis_pct];
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Calibration(format!(
                "anchor at density {} has a non-positive value",
                a.relative_density
            )));
        }
    }
    let mut sorted = anchors.to_vec();
    sorted.sort_by(|a, b| a.relative_density.total_cmp(&b.relative_density));
    if sorted
        .windows(2)
        .any(|w| w[0].relative_density == w[1].relative_density)
    {
        return Err(Error::Calibration("anchor densities must be distinct".into()));
    }

    let fits = Quantity::ALL
        .iter()
        .map(|&quantity| {
            let points: Vec<(f64, f64)> = sorted
                .iter()
                .map(|a| (a.relative_density, a.get(quantity)))
                .collect();
            let law = DensityScalingLaw::fit(&points)?;
            let residuals = points
                .iter()
                .map(|&(rho, observed)| {
                    let predicted = law.eval(rho);
                    AnchorResidual {
                        relative_density: rho,
                        observed,
                        predicted,
                        relative: (predicted - observed) / observed,
                    }
                })
                .collect();
            Ok(ScalingFit {
                quantity,
                law,
                residuals,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LatticeCalibration {
        anchors: sorted,
        fits,
        stiffening_exponent: DEFAULT_STIFFENING_EXPONENT,
    })
}

impl LatticeCalibration {
    pub fn builtin() -> Self {
        calibrate_from_anchors(&builtin_anchors()).expect("built-in anchors calibrate")
    }

    pub fn law(&self, quantity: Quantity) -> &DensityScalingLaw {
        &self
            .fits
            .iter()
            .find(|f| f.quantity == quantity)
            .expect("every quantity is fitted")
            .law
    }

    pub fn density_range(&self) -> (f64, f64) {
        (
            self.anchors[0].relative_density,
            self.anchors[self.anchors.len() - 1].relative_density,
        )
    }

    /// True when `density` lies outside the anchored range.
    pub fn is_extrapolated(&self, density: f64) -> bool {
        let (lo, hi) = self.density_range();
        density < lo || density > hi
    }

    pub fn quantity_at(&self, quantity: Quantity, density: f64) -> f64 {
        let first = &self.anchors[0];
        let last = &self.anchors[self.anchors.len() - 1];
        let exponent = self.law(quantity).exponent;
        if density <= first.relative_density {
            return first.get(quantity) * (density / first.relative_density).powf(exponent);
        }
        if density >= last.relative_density {
            return last.get(quantity) * (density / last.relative_density).powf(exponent);
        }
        let i = self
            .anchors
            .windows(2)
            .position(|w| density <= w[1].relative_density)
            .expect("density is inside the anchored range");
        let (lo, hi) = (&self.anchors[i], &self.anchors[i + 1]);
        if density == lo.relative_density {
            return lo.get(quantity);
        }
        if density == hi.relative_density {
            return hi.get(quantity);
        }
        let t = (density / lo.relative_density).ln()
            / (hi.relative_density / lo.relative_density).ln();
        let (qa, qb) = (lo.get(quantity), hi.get(quantity));
        (qa.ln() + t * (qb.ln() - qa.ln())).exp()
    }

    /// Mechanical model of a gyroid pad at the reference 3 mm cell size.
    pub fn model(&self, density: f64) -> Result<MechanicalModel> {
        MechanicalModel::new(
            self.quantity_at(Quantity::Stiffness, density),
            self.quantity_at(Quantity::ForceRange, density),
            self.quantity_at(Quantity::Hysteresis, density) / 100.0,
            self.stiffening_exponent,
        )
    }

    pub fn model_for_spec(&self, spec: &LatticeSpec) -> Result<MechanicalModel> {
        if spec.topology != Topology::Gyroid {
            return Err(Error::UnsupportedTopology(spec.topology));
        }
        let base = self.model(spec.relative_density)?;
        Ok(base.scaled(CellSizeFactor::default().multiplier(spec.cell_size_mm)))
    }
}

/// Force-range multiplier relative to 3 mm cells.
///
/// 3 mm cells exceed 2.2 mm cells by 70 % and 4 mm cells by 35 %, so the
/// multipliers at the ends are `1/1.70` and `1/1.35`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSizeFactor {
    pub table: Vec<(f64, f64)>,
}

impl Default for CellSizeFactor {
    fn default() -> Self {
        Self {
            table: vec![(2.2, 1.0 / 1.70), (3.0, 1.0), (4.0, 1.0 / 1.35)],
        }
    }
}

impl CellSizeFactor {
    /// Piecewise-linear in cell size, held constant beyond the table ends.
    pub fn multiplier(&self, cell_size_mm: f64) -> f64 {
        let t = &self.table;
        if cell_size_mm <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if cell_size_mm <= x1 {
                return y0 + (y1 - y0) * (cell_size_mm - x0) / (x1 - x0);
            }
        }
        t[t.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalModel {
    /// Initial linear slope, N/mm.
    pub k0: f64,
    pub linear_limit_mm: f64,
    /// Loading force at `densification_mm`.
    pub f_op: f64,
    pub stiffening_exponent: f64,
    pub densification_mm: f64,
    /// Peak loading/unloading gap as a fraction of the peak loading force.
    pub hysteresis_ratio: f64,
}

impl MechanicalModel {
    pub fn new(k0: f64, f_op: f64, hysteresis_ratio: f64, stiffening_exponent: f64) -> Result<Self> {
        let model = Self {
            k0,
            linear_limit_mm: LINEAR_LIMIT_MM,
            f_op,
            stiffening_exponent,
            densification_mm: DENSIFICATION_MM,
            hysteresis_ratio,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.f_op > 0.0) {
            return Err(Error::Calibration(format!(
                "stiffness {} and force range {} must be positive",
                self.k0, self.f_op
            )));
        }
        if !(self.stiffening_exponent >= 1.0) {
            return Err(Error::Calibration(format!(
                "stiffening exponent {} must be >= 1",
                self.stiffening_exponent
            )));
        }
        if !(0.0..1.0).contains(&self.hysteresis_ratio) {
            return Err(Error::Calibration(format!(
                "hysteresis ratio {} outside [0, 1)",
                self.hysteresis_ratio
            )));
        }
        // The slope is extremal at one end of the stiffening segment.
        let span = self.densification_mm - self.linear_limit_mm;
        let end_slope = self.loading_slope_unchecked(self.densification_mm);
        let start_slope = if self.stiffening_exponent == 1.0 {
            self.k0 + self.stiffening_coefficient()
        } else {
            self.k0
        };
        if !(end_slope > 0.0 && start_slope > 0.0) || span <= 0.0 {
            return Err(Error::Calibration(format!(
                "loading curve (k0 = {}, F_op = {}) is not strictly increasing up to {} mm",
                self.k0, self.f_op, self.densification_mm
            )));
        }
        Ok(())
    }

    /// Coefficient `c` of the stiffening term, pinned by `F(d_dens) = F_op`.
    /// Negative when the anchor force sits below the linear extrapolation.
    pub fn stiffening_coefficient(&self) -> f64 {
        let span = self.densification_mm - self.linear_limit_mm;
        (self.f_op - self.k0 * self.densification_mm) / span.powf(self.stiffening_exponent)
    }

    /// Same shape, every force scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k0: self.k0 * factor,
            f_op: self.f_op * factor,
            ..*self
        }
    }

    fn check_range(&self, d: f64) -> Result<()> {
        if !(0.0..=self.densification_mm).contains(&d) {
            return Err(Error::OutOfRange {
                displacement_mm: d,
                limit_mm: self.densification_mm,
            });
        }
        Ok(())
    }

    fn loading_force_unchecked(&self, d: f64) -> f64 {
        let linear = self.k0 * d;
        if d <= self.linear_limit_mm {
            linear
        } else {
            linear
                + self.stiffening_coefficient()
                    * (d - self.linear_limit_mm).powf(self.stiffening_exponent)
        }
    }

    fn loading_slope_unchecked(&self, d: f64) -> f64 {
        if d <= self.linear_limit_mm {
            self.k0
        } else {
            let p = self.stiffening_exponent;
            self.k0 + self.stiffening_coefficient() * p * (d - self.linear_limit_mm).powf(p - 1.0)
        }
    }

    pub fn loading_force(&self, d: f64) -> Result<f64> {
        self.check_range(d)?;
        Ok(self.loading_force_unchecked(d))
    }

    pub fn loading_slope(&self, d: f64) -> Result<f64> {
        self.check_range(d)?;
        Ok(self.loading_slope_unchecked(d))
    }

    pub fn operational_force_range(&self) -> f64 {
        self.loading_force_unchecked(self.densification_mm)
    }

    /// Displacement at which the loading branch carries `force`.
    pub fn invert_loading(&self, force: f64) -> Result<f64> {
        if !(force >= 0.0) {
            return Err(Error::Contract(format!("negative load {force} N")));
        }
        let limit = self.operational_force_range();
        if force > limit + INVERSION_TOLERANCE_N {
            return Err(Error::Densification {
                cell: None,
                load_n: force,
                limit_n: limit,
            });
        }
        if force == 0.0 {
            return Ok(0.0);
        }
        Ok(bisect_increasing(
            |d| self.loading_force_unchecked(d),
            force,
            0.0,
            self.densification_mm,
        ))
    }

    /// Bump amplitude making the largest loading/unloading gap of a cycle to
    /// `d_peak` equal `hysteresis_ratio * F(d_peak)`.
    pub fn bump_amplitude(&self, d_peak: f64) -> f64 {
        if self.hysteresis_ratio == 0.0 || d_peak <= 0.0 {
            return 0.0;
        }
        let weighted = |d: f64| self.loading_force_unchecked(d) * (PI * d / d_peak).sin();
        let peak = maximize(weighted, 0.0, d_peak);
        self.hysteresis_ratio * self.loading_force_unchecked(d_peak) / peak
    }

    pub fn unloading_force(&self, d: f64, d_peak: f64) -> Result<f64> {
        self.check_range(d_peak)?;
        self.check_range(d)?;
        if d > d_peak {
            return Err(Error::Contract(format!(
                "unloading displacement {d} mm exceeds peak {d_peak} mm"
            )));
        }
        let load = self.loading_force_unchecked(d);
        if d == d_peak || d == 0.0 {
            return Ok(load);
        }
        let amplitude = self.bump_amplitude(d_peak);
        Ok(load * (1.0 - amplitude * (PI * d / d_peak).sin()))
    }
}

/// Solve `f(x) = target` for a strictly increasing `f` on `[lo, hi]`.
pub(crate) fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..INVERSION_MAX_ITERATIONS {
        mid = 0.5 * (lo + hi);
        let value = f(mid);
        if (value - target).abs() <= INVERSION_TOLERANCE_N {
            break;
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Maximum of a unimodal-ish function: coarse grid, then golden section.
fn maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const GRID: usize = 256;
    let step = (hi - lo) / GRID as f64;
    let best = (0..=GRID)
        .map(|i| lo + step * i as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(lo);
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).max(f(best))
}

/// Least-squares slope through the origin over samples with `d <= 2 mm`.
pub fn effective_stiffness(samples: &[(f64, f64)]) -> Result<f64> {
    let in_range: Vec<&(f64, f64)> = samples
        .iter()
        .filter(|(d, _)| *d >= 0.0 && *d <= LINEAR_LIMIT_MM + 1e-12)
        .collect();
    if in_range.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "effective stiffness needs >= 2 samples in [0, {LINEAR_LIMIT_MM}] mm, got {}",
            in_range.len()
        )));
    }
    let sdd: f64 = in_range.iter().map(|(d, _)| d * d).sum();
    let sdf: f64 = in_range.iter().map(|(d, f)| d * f).sum();
    if sdd == 0.0 {
        return Err(Error::InsufficientSamples(
            "all linear-region samples are at zero displacement".into(),
        ));
    }
    Ok(sdf / sdd)
}

pub fn operational_force_range(model: &MechanicalModel) -> f64 {
    model.operational_force_range()
}

/// Largest loading/unloading force gap as a percentage of the full-scale
/// loading force. Both branches are `(displacement, force)` on the same grid.
pub fn hysteresis_metric(loading: &[(f64, f64)], unloading: &[(f64, f64)]) -> Result<f64> {
    if loading.len() != unloading.len() {
        return Err(Error::Alignment(format!(
            "loading has {} samples, unloading {}",
            loading.len(),
            unloading.len()
        )));
    }
    if let Some((l, u)) = loading
        .iter()
        .zip(unloading)
        .find(|(l, u)| (l.0 - u.0).abs() > 1e-9 * (1.0 + l.0.abs()))
    {
        return Err(Error::Alignment(format!(
            "displacement grids differ: {} vs {}",
            l.0, u.0
        )));
    }
    let full_scale = loading.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if !(full_scale > 0.0) {
        return Err(Error::Contract("full-scale loading force must be positive".into()));
    }
    let gap = loading
        .iter()
        .zip(unloading)
        .map(|(l, u)| (l.1 - u.1).abs())
        .fold(0.0, f64::max);
    Ok(100.0 * gap / full_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn calib() -> LatticeCalibration {
        LatticeCalibration::builtin()
    }

    #[test]
    fn builtin_anchor_table_parses() {
        let a = builtin_anchors();
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].relative_density, 0.10);
        assert_eq!(a[2].f_op, 16.68);
    }

    #[test]
    fn anchor_ratios() {
        let c = calib();
        let k_ratio = c.quantity_at(Quantity::Stiffness, 0.20) / c.quantity_at(Quantity::Stiffness, 0.07);
        assert!((k_ratio / 6.81 - 1.0).abs() < 0.02, "{k_ratio}");
        let f_ratio = c.quantity_at(Quantity::ForceRange, 0.20) / c.quantity_at(Quantity::ForceRange, 0.07);
        assert_relative_eq!(f_ratio, 16.68 / 1.78, max_relative = 1e-12);
    }

    #[test]
    fn flat_law_from_equal_values() {
        let law = DensityScalingLaw::fit(&[(0.1, 2.5), (0.2, 2.5)]).unwrap();
        assert!(law.exponent.abs() < 1e-12);
        assert_relative_eq!(law.coefficient, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn leave_one_out_stiffness_interpolation() {
        // Two-point log-log line through the outer anchors, evaluated in closed form.
        let b = (2.52f64 / 0.37).ln() / (0.20f64 / 0.07).ln();
        let expected = 0.37 * (0.10f64 / 0.07).powf(b);
        let law = DensityScalingLaw::fit(&[(0.07, 0.37), (0.20, 2.52)]).unwrap();
        assert_relative_eq!(law.eval(0.10), expected, max_relative = 1e-12);
        // The held-out 0.54 N/mm is overpredicted by roughly 31 %.
        let err = (law.eval(0.10) - 0.54) / 0.54;
        assert!((0.30..0.33).contains(&err), "{err}");
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(calibrate_from_anchors(&builtin_anchors()[..1]), Err(Error::Calibration(_))));
        let mut bad = builtin_anchors();
        bad[0].k0 = 0.0;
        assert!(matches!(calibrate_from_anchors(&bad), Err(Error::Calibration(_))));
        let mut dup = builtin_anchors();
        dup[1].relative_density = 0.07;
        assert!(calibrate_from_anchors(&dup).is_err());
    }

    #[test]
    fn residuals_are_reported() {
        let c = calib();
        for fit in &c.fits {
            assert_eq!(fit.residuals.len(), 3);
            for r in &fit.residuals {
                assert_relative_eq!(r.predicted, fit.law.eval(r.relative_density));
            }
        }
    }

    #[test]
    fn loading_force_anchors() {
        let c = calib();
        let m20 = c.model(0.20).unwrap();
        assert_relative_eq!(m20.loading_force(6.0).unwrap(), 16.68, max_relative = 1e-9);
        let m07 = c.model(0.07).unwrap();
        assert_relative_eq!(m07.loading_force(1.0).unwrap(), 0.37, max_relative = 1e-12);
        assert_eq!(m07.loading_force(0.0).unwrap(), 0.0);
        for (rho, f) in [(0.07, 1.78), (0.10, 3.61), (0.20, 16.68)] {
            assert_relative_eq!(operational_force_range(&c.model(rho).unwrap()), f, max_relative = 1e-9);
        }
    }

    #[test]
    fn out_of_range_displacement() {
        let m = calib().model(0.10).unwrap();
        assert!(matches!(m.loading_force(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(m.loading_force(6.01), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn smooth_at_linear_limit() {
        let m = calib().model(0.20).unwrap();
        let h = 1e-6;
        let left = (m.loading_force(2.0).unwrap() - m.loading_force(2.0 - h).unwrap()) / h;
        let right = (m.loading_force(2.0 + h).unwrap() - m.loading_force(2.0).unwrap()) / h;
        assert!((left - right).abs() < 1e-4);
    }

    #[test]
    fn monotone_on_fine_grid() {
        let c = calib();
        for rho in [0.07, 0.085, 0.10, 0.15, 0.20, 0.25, 0.30] {
            let m = c.model(rho).unwrap();
            let mut prev = -1.0;
            for i in 0..=600 {
                let f = m.loading_force(i as f64 * 0.01).unwrap();
                assert!(f > prev, "rho {rho} not increasing at {}", i as f64 * 0.01);
                prev = f;
            }
        }
    }

    #[test]
    fn non_monotone_model_rejected() {
        // F_op far below the linear extrapolation forces a falling tail.
        assert!(MechanicalModel::new(1.0, 2.0, 0.1, 3.0).is_err());
        assert!(MechanicalModel::new(1.0, 8.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn unloading_closure_and_zero_hysteresis() {
        let m = calib().model(0.20).unwrap();
        assert_eq!(m.unloading_force(0.0, 4.0).unwrap(), 0.0);
        assert_eq!(m.unloading_force(4.0, 4.0).unwrap(), m.loading_force(4.0).unwrap());
        assert!(matches!(m.unloading_force(4.5, 4.0), Err(Error::Contract(_))));
        let flat = MechanicalModel { hysteresis_ratio: 0.0, ..m };
        for i in 0..=60 {
            let d = i as f64 * 0.1;
            assert_eq!(flat.unloading_force(d, 6.0).unwrap(), flat.loading_force(d).unwrap());
        }
    }

    #[test]
    fn cycle_hysteresis_matches_anchor() {
        let c = calib();
        for (rho, pct) in [(0.07, 20.07), (0.10, 17.00), (0.20, 8.70)] {
            let m = c.model(rho).unwrap();
            let grid: Vec<f64> = (0..=6000).map(|i| i as f64 * 0.001).collect();
            let load: Vec<_> = grid.iter().map(|&d| (d, m.loading_force(d).unwrap())).collect();
            let unload: Vec<_> = grid.iter().map(|&d| (d, m.unloading_force(d, 6.0).unwrap())).collect();
            let h = hysteresis_metric(&load, &unload).unwrap();
            assert!((h - pct).abs() < 0.1, "rho {rho}: {h}");
        }
    }

    #[test]
    fn hysteresis_metric_examples() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let load: Vec<_> = grid.iter().map(|&d| (d, d)).collect();
        assert_eq!(hysteresis_metric(&load, &load).unwrap(), 0.0);
        let unload: Vec<_> = grid.iter().map(|&d| (d, 0.8 * d)).collect();
        assert_relative_eq!(hysteresis_metric(&load, &unload).unwrap(), 20.0, max_relative = 1e-12);
        assert!(matches!(hysteresis_metric(&load, &unload[1..]), Err(Error::Alignment(_))));
    }

    #[test]
    fn effective_stiffness_examples() {
        let exact = [(0.0, 0.0), (1.0, 5.0), (2.0, 10.0)];
        assert_relative_eq!(effective_stiffness(&exact).unwrap(), 5.0);
        assert!(effective_stiffness(&[(1.0, 5.0), (3.0, 9.0)]).is_err());
        let c = calib();
        for (rho, k0) in [(0.07, 0.37), (0.10, 0.54)] {
            let m = c.model(rho).unwrap();
            let samples: Vec<_> = (0..=600)
                .map(|i| i as f64 * 0.01)
                .map(|d| (d, m.loading_force(d).unwrap()))
                .collect();
            let k = effective_stiffness(&samples).unwrap();
            assert!((k / k0 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn printability_examples() {
        assert!(check_printability(&LatticeSpec::gyroid(3.0, 0.10)).is_valid());
        let low = check_printability(&LatticeSpec::gyroid(3.0, 0.05));
        assert!(matches!(low.violations[..], [PrintabilityViolation::DensityBelowFloor { .. }]));
        assert!(low.violations[0].to_string().contains("support itself"));
        let small = check_printability(&LatticeSpec::gyroid(1.0, 0.10));
        assert!(matches!(small.violations[..], [PrintabilityViolation::CellSizeBelowMinimum { .. }]));
        let many = check_printability(&LatticeSpec {
            thickness_mm: 0.0,
            ..LatticeSpec::gyroid(5.0, 0.35)
        });
        assert_eq!(many.violations.len(), 3);
    }

    #[test]
    fn cell_size_multiplier() {
        let f = CellSizeFactor::default();
        assert_eq!(f.multiplier(3.0), 1.0);
        assert_relative_eq!(f.multiplier(2.2), 1.0 / 1.70);
        assert_relative_eq!(f.multiplier(4.0), 1.0 / 1.35);
        assert_relative_eq!(f.multiplier(2.6), 0.5 * (1.0 / 1.70 + 1.0));
        let c = calib();
        let m = c.model_for_spec(&LatticeSpec::gyroid(2.2, 0.20)).unwrap();
        assert_relative_eq!(m.operational_force_range(), 16.68 / 1.70, max_relative = 1e-9);
    }

    #[test]
    fn unsupported_topologies() {
        let c = calib();
        for t in [Topology::SchwarzD, Topology::XCellStrut] {
            let spec = LatticeSpec {
                topology: t,
                ..LatticeSpec::gyroid(3.0, 0.10)
            };
            assert!(matches!(c.model_for_spec(&spec), Err(Error::UnsupportedTopology(_))));
        }
    }

    #[test]
    fn inversion_round_trip() {
        let m = calib().model(0.20).unwrap();
        // 4.905 N is reached inside the linear region, so d = F / k0 exactly.
        let d = m.invert_loading(4.905).unwrap();
        assert!((d - 4.905 / 2.52).abs() < 1e-9);
        assert!((m.loading_force(d).unwrap() - 4.905).abs() <= INVERSION_TOLERANCE_N);
        assert!(matches!(m.invert_loading(17.0), Err(Error::Densification { .. })));
    }
}
