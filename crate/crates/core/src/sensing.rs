//! Coil-array inductance model and synthetic 16-channel frames.
//!
//! Each coil reads the compression of the lattice pad above it through a
//! linear gap law. The slope is calibrated per density: Table-style
//! sensitivities (µH/N averaged over the 6 mm stroke) are only consistent
//! with a single coil curve if the slope depends on the pad, so
//! `slope(rho) = S(rho) * F_op(rho) / 6 mm`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeCalibration, Quantity, DENSIFICATION_MM};
use crate::map::{all_cells, cell_index, Cell, StiffnessMap, CELL_COUNT, GRID, PITCH_MM};

pub const COIL_SIDE_MM: f64 = 25.0;
/// Linear region of the coil's inductance-distance curve.
pub const LINEAR_SPAN_MM: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilArraySpec {
    pub rows: usize,
    pub cols: usize,
    pub coil_side_mm: f64,
    pub pitch_mm: f64,
}

impl Default for CoilArraySpec {
    fn default() -> Self {
        Self {
            rows: GRID,
            cols: GRID,
            coil_side_mm: COIL_SIDE_MM,
            pitch_mm: PITCH_MM,
        }
    }
}

impl CoilArraySpec {
    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.1 as f64 + 0.5) * self.pitch_mm,
            (cell.0 as f64 + 0.5) * self.pitch_mm,
        )
    }

    pub fn span(&self) -> (f64, f64) {
        (self.cols as f64 * self.pitch_mm, self.rows as f64 * self.pitch_mm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResponse {
    pub linear_span_mm: f64,
    /// `(density, µH per mm of compression)`, sorted by density.
    pub slope_per_density: Vec<(f64, f64)>,
    /// Log-log exponent used beyond the anchored densities.
    pub extrapolation_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductanceReading {
    pub delta_uh: f64,
    /// Compression went past the coil's linear span and was clamped.
    pub saturated: bool,
    /// Density lies outside the calibrated range.
    pub extrapolated: bool,
}

pub fn calibrate_gap_slopes(lattice: &LatticeCalibration) -> GapResponse {
    let slope_per_density = lattice
        .anchors
        .iter()
        .map(|a| (a.relative_density, a.sensitivity * a.f_op / DENSIFICATION_MM))
        .collect();
    GapResponse {
        linear_span_mm: LINEAR_SPAN_MM,
        slope_per_density,
        extrapolation_exponent: lattice.law(Quantity::Sensitivity).exponent
            + lattice.law(Quantity::ForceRange).exponent,
    }
}

impl GapResponse {
    pub fn is_extrapolated(&self, density: f64) -> bool {
        let s = &self.slope_per_density;
        density < s[0].0 || density > s[s.len() - 1].0
    }

    /// µH per mm of compression at `density`, log-log interpolated.
    pub fn slope(&self, density: f64) -> f64 {
        let s = &self.slope_per_density;
        let (first, last) = (s[0], s[s.len() - 1]);
        if density <= first.0 {
            return first.1 * (density / first.0).powf(self.extrapolation_exponent);
        }
        if density >= last.0 {
            return last.1 * (density / last.0).powf(self.extrapolation_exponent);
        }
        let i = s
            .windows(2)
            .position(|w| density <= w[1].0)
            .expect("density inside anchored range");
        let ((x0, y0), (x1, y1)) = (s[i], s[i + 1]);
        if density == x0 {
            return y0;
        }
        if density == x1 {
            return y1;
        }
        let t = (density / x0).ln() / (x1 / x0).ln();
        (y0.ln() + t * (y1.ln() - y0.ln())).exp()
    }

    pub fn delta_inductance(&self, density: f64, compression_mm: f64) -> Result<InductanceReading> {
        if !(compression_mm >= 0.0) {
            return Err(Error::Contract(format!(
                "compression {compression_mm} mm must be non-negative"
            )));
        }
        let saturated = compression_mm > self.linear_span_mm;
        let effective = compression_mm.min(self.linear_span_mm);
        Ok(InductanceReading {
            delta_uh: self.slope(density) * effective,
            saturated,
            extrapolated: self.is_extrapolated(density),
        })
    }

    /// Inverse of the linear part: compression producing `delta_uh`.
    pub fn compression(&self, density: f64, delta_uh: f64) -> f64 {
        delta_uh / self.slope(density)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t_s: f64,
    /// Row-major, µH, non-negative.
    pub delta_uh: [f64; CELL_COUNT],
}

impl SensorFrame {
    pub fn zero(t_s: f64) -> Self {
        Self {
            t_s,
            delta_uh: [0.0; CELL_COUNT],
        }
    }

    pub fn channel(&self, cell: Cell) -> f64 {
        self.delta_uh[cell_index(cell)]
    }

    pub fn total(&self) -> f64 {
        self.delta_uh.iter().sum()
    }
}

/// Normal load per cell, N.
pub type LoadField = [[f64; GRID]; GRID];

/// Solve each cell's compression from its load, then read the coil.
pub fn simulate_frame(
    array: &CoilArraySpec,
    map: &StiffnessMap,
    lattice: &LatticeCalibration,
    gap: &GapResponse,
    loads: &LoadField,
    t_s: f64,
) -> Result<SensorFrame> {
    debug_assert_eq!(array.rows * array.cols, CELL_COUNT);
    let mut frame = SensorFrame::zero(t_s);
    for cell in all_cells() {
        let load = loads[cell.0][cell.1];
        if !(load >= 0.0) {
            return Err(Error::Contract(format!("negative load {load} N at cell {cell:?}")));
        }
        if load == 0.0 {
            continue;
        }
        let density = map.density(cell);
        let model = lattice.model(density)?;
        let compression = model.invert_loading(load).map_err(|e| match e {
            Error::Densification { load_n, limit_n, .. } => Error::Densification {
                cell: Some(cell),
                load_n,
                limit_n,
            },
            other => other,
        })?;
        frame.delta_uh[cell_index(cell)] = gap.delta_inductance(density, compression)?.delta_uh;
    }
    Ok(frame)
}

/// Per-cell force implied by a frame, inverting the gap law then the
/// loading branch.
pub fn recover_loads(
    frame: &SensorFrame,
    map: &StiffnessMap,
    lattice: &LatticeCalibration,
    gap: &GapResponse,
) -> Result<LoadField> {
    let mut loads = [[0.0; GRID]; GRID];
    for cell in all_cells() {
        let delta = frame.channel(cell);
        if delta == 0.0 {
            continue;
        }
        let density = map.density(cell);
        let compression = gap.compression(density, delta);
        loads[cell.0][cell.1] = lattice.model(density)?.loading_force(compression)?;
    }
    Ok(loads)
}

/// Response on `neighbor` while only `active` is loaded. The coils are
/// shielded from each other, so this is identically zero.
pub fn crosstalk_response(active: Cell, neighbor: Cell) -> Result<f64> {
    if active == neighbor {
        return Err(Error::Contract(format!(
            "crosstalk needs two distinct cells, got {active:?} twice"
        )));
    }
    Ok(0.0)
}

pub fn frame_header() -> Vec<String> {
    std::iter::once("t_s".to_string())
        .chain(all_cells().map(|(r, c)| format!("c{r}{c}")))
        .collect()
}

pub fn write_frames<W: Write>(writer: W, frames: &[SensorFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(frame_header())?;
    for f in frames {
        let row = std::iter::once(f.t_s)
            .chain(f.delta_uh.iter().copied())
            .map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames<R: Read>(reader: R) -> Result<Vec<SensorFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != frame_header() {
        return Err(Error::Alignment(format!(
            "frame log header must be t_s,c00..c33, got {}",
            header.join(",")
        )));
    }
    let mut frames = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Alignment(format!("frame row {}: {e}", line + 2)))?;
        let mut delta_uh = [0.0; CELL_COUNT];
        delta_uh.copy_from_slice(&values[1..]);
        frames.push(SensorFrame {
            t_s: values[0],
            delta_uh,
        });
    }
    Ok(frames)
}

/// Coil centres, row-major.
pub fn coil_centers(array: &CoilArraySpec) -> Vec<(f64, f64)> {
    all_cells().map(|c| array.center(c)).collect()
}
