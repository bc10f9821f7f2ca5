//! Signal processing over simulated or recorded logs: stream alignment,
//! localisation, velocity estimation and the four pad metrics.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{effective_stiffness, hysteresis_metric, DENSIFICATION_MM};
use crate::map::{all_cells, cell_index, Cell};
use crate::dynamics::Calibration;
use crate::sensing::{CoilArraySpec, GapResponse, SensorFrame};

pub const DEFAULT_NOISE_FLOOR_UH: f64 = 0.5;
pub const DEFAULT_VELOCITY_WINDOW: usize = 5;
/// Indentation speed of the characterisation rig.
pub const DEFAULT_INDENT_RATE_MM_S: f64 = 0.5;
pub const DEFAULT_SAMPLE_HZ: f64 = 20.0;

/// Timestamped samples with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedStream<T> {
    samples: Vec<(f64, T)>,
    pub nominal_hz: f64,
}

impl<T> TimedStream<T> {
    pub fn new(samples: Vec<(f64, T)>, nominal_hz: f64) -> Result<Self> {
        if let Some(i) = samples.windows(2).position(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Alignment(format!(
                "timestamps must strictly increase: sample {} at {} follows {}",
                i + 1,
                samples[i + 1].0,
                samples[i].0
            )));
        }
        Ok(Self { samples, nominal_hz })
    }

    pub fn samples(&self) -> &[(f64, T)] {
        &self.samples
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn median_period(&self) -> Option<f64> {
        let mut gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len();
        Some(if n % 2 == 1 {
            gaps[n / 2]
        } else {
            0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub t_a: f64,
    pub t_b: f64,
}

impl SyncedPair {
    pub fn error_s(&self) -> f64 {
        (self.t_b - self.t_a).abs()
    }
}

/// Pair every sample of `a` with the sample of `b` closest in time. Equal
/// distances resolve to the earlier `b` sample.
pub fn nearest_neighbor_sync<A, B>(a: &TimedStream<A>, b: &TimedStream<B>) -> Result<Vec<SyncedPair>> {
    if a.is_empty() {
        return Err(Error::EmptyStream("first stream"));
    }
    if b.is_empty() {
        return Err(Error::EmptyStream("second stream"));
    }
    let tb: Vec<f64> = b.times().collect();
    let mut j = 0;
    Ok(a
        .times()
        .enumerate()
        .map(|(i, t)| {
            // Advance while the next b sample is strictly closer.
            while j + 1 < tb.len() && (tb[j + 1] - t).abs() < (tb[j] - t).abs() {
                j += 1;
            }
            SyncedPair {
                index_a: i,
                index_b: j,
                t_a: t,
                t_b: tb[j],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub t_s: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    /// Total response over the cells above the noise floor, µH.
    pub confidence_uh: f64,
    /// False when every channel sits below the noise floor.
    pub detected: bool,
}

/// Response-weighted centroid of the coil centres above `noise_floor_uh`.
pub fn localize(frame: &SensorFrame, array: &CoilArraySpec, noise_floor_uh: f64) -> LocalizationEstimate {
    let active: Vec<(f64, (f64, f64))> = all_cells()
        .map(|cell| (frame.channel(cell), array.center(cell)))
        .filter(|(w, _)| *w > noise_floor_uh)
        .collect();
    let total: f64 = active.iter().map(|(w, _)| w).sum();
    if total > 0.0 {
        // Normalised weights first, so a lone active cell gets weight 1
        // and lands exactly on its coil centre.
        let (x_mm, y_mm) = active.iter().fold((0.0, 0.0), |(x, y), (w, (cx, cy))| {
            let share = w / total;
            (x + share * cx, y + share * cy)
        });
        LocalizationEstimate {
            t_s: frame.t_s,
            x_mm,
            y_mm,
            confidence_uh: total,
            detected: true,
        }
    } else {
        LocalizationEstimate {
            t_s: frame.t_s,
            x_mm: f64::NAN,
            y_mm: f64::NAN,
            confidence_uh: 0.0,
            detected: false,
        }
    }
}

pub fn localize_all(frames: &[SensorFrame], array: &CoilArraySpec, noise_floor_uh: f64) -> Vec<LocalizationEstimate> {
    frames.iter().map(|f| localize(f, array, noise_floor_uh)).collect()
}

pub fn write_track<W: Write>(writer: W, track: &[LocalizationEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "x_mm", "y_mm", "confidence_uh"])?;
    for e in track {
        w.write_record([e.t_s, e.x_mm, e.y_mm, e.confidence_uh].iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityEstimate {
    pub t_s: f64,
    pub vx_mm_s: f64,
    pub vy_mm_s: f64,
}

impl VelocityEstimate {
    pub fn speed(&self) -> f64 {
        self.vx_mm_s.hypot(self.vy_mm_s)
    }
}

/// Central differences over the detected estimates, then a centred moving
/// average of `window` samples, narrowed symmetrically at the ends.
pub fn estimate_velocity(track: &[LocalizationEstimate], window: usize) -> Result<Vec<VelocityEstimate>> {
    let valid: Vec<&LocalizationEstimate> = track.iter().filter(|e| e.detected).collect();
    let n = valid.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "velocity needs >= 2 detected estimates, got {n}"
        )));
    }
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dt = valid[hi].t_s - valid[lo].t_s;
            (
                (valid[hi].x_mm - valid[lo].x_mm) / dt,
                (valid[hi].y_mm - valid[lo].y_mm) / dt,
            )
        })
        .collect();
    let half = window.max(1) / 2;
    Ok((0..n)
        .map(|i| {
            // Shrink symmetrically near the ends so linear trends stay unbiased.
            let h = half.min(i).min(n - 1 - i);
            let (lo, hi) = (i - h, i + h);
            let m = (hi - lo + 1) as f64;
            let (sx, sy) = raw[lo..=hi]
                .iter()
                .fold((0.0, 0.0), |(ax, ay), (vx, vy)| (ax + vx, ay + vy));
            VelocityEstimate {
                t_s: valid[i].t_s,
                vx_mm_s: sx / m,
                vy_mm_s: sy / m,
            }
        })
        .collect())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Alignment(format!(
            "correlation needs two curves of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("a curve is constant".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.len() as f64;
    let mut out = vec![0.0; curves[0].len()];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v / n;
        }
    }
    out
}

/// Pearson correlation (percent) between the mean of the first `head` and
/// the mean of the last `tail` cycles. Scale changes between the two groups
/// do not show up in this number.
pub fn repeatability_correlation(cycles: &[Vec<f64>], head: usize, tail: usize) -> Result<f64> {
    if head == 0 || tail == 0 || cycles.len() < head + tail {
        return Err(Error::InsufficientSamples(format!(
            "need at least {} cycles, got {}",
            head + tail,
            cycles.len()
        )));
    }
    let len = cycles[0].len();
    if cycles.iter().any(|c| c.len() != len) {
        return Err(Error::Alignment("cycles are not on a common grid".into()));
    }
    let first = mean_curve(&cycles[..head]);
    let last = mean_curve(&cycles[cycles.len() - tail..]);
    Ok(100.0 * pearson(&first, &last)?)
}

/// Force and coil logs of a displacement-controlled compression cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleLogs {
    pub force: TimedStream<f64>,
    pub frames: Vec<SensorFrame>,
    pub displacement_mm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSettings {
    pub density: f64,
    pub cell: Cell,
    pub peak_mm: f64,
    pub rate_mm_s: f64,
    pub sample_hz: f64,
    /// Shift of the force clock relative to the coil clock.
    pub force_clock_offset_s: f64,
}

impl CycleSettings {
    pub fn full_stroke(density: f64) -> Self {
        Self {
            density,
            cell: (1, 1),
            peak_mm: DENSIFICATION_MM,
            rate_mm_s: DEFAULT_INDENT_RATE_MM_S,
            sample_hz: DEFAULT_SAMPLE_HZ,
            force_clock_offset_s: 0.0,
        }
    }
}

/// Triangle stroke `0 → peak → 0` on one cell.
pub fn simulate_compression_cycle(calibration: &Calibration, settings: &CycleSettings) -> Result<CycleLogs> {
    let model = calibration.lattice.model(settings.density)?;
    let half = (settings.peak_mm / settings.rate_mm_s * settings.sample_hz).round() as usize;
    if half == 0 {
        return Err(Error::IncompleteCycle("stroke shorter than one sample".into()));
    }
    let mut force = Vec::with_capacity(2 * half + 1);
    let mut frames = Vec::with_capacity(2 * half + 1);
    let mut displacement = Vec::with_capacity(2 * half + 1);
    for i in 0..=2 * half {
        let t = i as f64 / settings.sample_hz;
        let (d, f) = if i <= half {
            let d = settings.peak_mm * i as f64 / half as f64;
            (d, model.loading_force(d)?)
        } else {
            let d = settings.peak_mm * (2 * half - i) as f64 / half as f64;
            (d, model.unloading_force(d, settings.peak_mm)?)
        };
        let mut frame = SensorFrame::zero(t);
        frame.delta_uh[cell_index(settings.cell)] =
            calibration.gap.delta_inductance(settings.density, d)?.delta_uh;
        frames.push(frame);
        force.push((t + settings.force_clock_offset_s, f));
        displacement.push(d);
    }
    Ok(CycleLogs {
        force: TimedStream::new(force, settings.sample_hz)?,
        frames,
        displacement_mm: displacement,
    })
}

/// Coil response of `count` consecutive cycles, one curve per cycle, with
/// optional seeded Gaussian noise (`noise_fraction` of full scale).
pub fn simulate_repeated_cycles(
    calibration: &Calibration,
    settings: &CycleSettings,
    count: usize,
    noise_fraction: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let logs = simulate_compression_cycle(calibration, settings)?;
    let idx = cell_index(settings.cell);
    let curve: Vec<f64> = logs.frames.iter().map(|f| f.delta_uh[idx]).collect();
    let full_scale = curve.iter().copied().fold(0.0, f64::max);
    if noise_fraction <= 0.0 {
        return Ok(vec![curve; count]);
    }
    let noise = Normal::new(0.0, noise_fraction * full_scale)
        .map_err(|e| Error::Contract(format!("noise level: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| curve.iter().map(|v| v + noise.sample(&mut rng)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadMetrics {
    pub effective_stiffness_n_per_mm: f64,
    pub operational_force_range_n: f64,
    pub sensitivity_uh_per_n: f64,
    pub hysteresis_pct: f64,
}

/// Pad metrics from a synchronised force log and coil log of one cycle.
/// Displacement is read back from the active coil through the gap law.
pub fn characterize(
    force: &TimedStream<f64>,
    frames: &[SensorFrame],
    density: f64,
    gap: &GapResponse,
) -> Result<PadMetrics> {
    let frame_stream = TimedStream::new(frames.iter().map(|f| (f.t_s, f)).collect(), force.nominal_hz)?;
    let pairs = nearest_neighbor_sync(force, &frame_stream)?;
    let channel = (0..frames[0].delta_uh.len())
        .max_by(|&a, &b| {
            let peak = |c: usize| frames.iter().map(|f| f.delta_uh[c]).fold(0.0, f64::max);
            peak(a).total_cmp(&peak(b))
        })
        .expect("frames have channels");

    // (displacement, force, inductance)
    let samples: Vec<(f64, f64, f64)> = pairs
        .iter()
        .map(|p| {
            let dl = frames[p.index_b].delta_uh[channel];
            (gap.compression(density, dl), force.samples()[p.index_a].1, dl)
        })
        .collect();
    let peak = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let d_peak = samples[peak].0;
    if !(d_peak > 0.0) {
        return Err(Error::IncompleteCycle("zero-amplitude cycle".into()));
    }
    if d_peak < DENSIFICATION_MM - 1e-6 {
        return Err(Error::IncompleteCycle(format!(
            "stroke reached {d_peak:.4} mm, metrics need {DENSIFICATION_MM} mm"
        )));
    }
    if peak + 1 >= samples.len() {
        return Err(Error::IncompleteCycle("no unloading branch".into()));
    }

    let loading: Vec<(f64, f64)> = samples[..=peak].iter().map(|s| (s.0, s.1)).collect();
    let mut unloading: Vec<(f64, f64)> = samples[peak..].iter().map(|s| (s.0, s.1)).collect();
    unloading.sort_by(|a, b| a.0.total_cmp(&b.0));

    let k0 = effective_stiffness(&loading)?;
    let f_op = loading.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let (first, top) = (samples[0], samples[peak]);
    let sensitivity = (top.2 - first.2) / (top.1 - first.1);

    let resampled: Vec<(f64, f64)> = loading
        .iter()
        .map(|&(d, _)| (d, interpolate(&unloading, d)))
        .collect();
    let hysteresis = hysteresis_metric(&loading, &resampled)?;

    Ok(PadMetrics {
        effective_stiffness_n_per_mm: k0,
        operational_force_range_n: f_op,
        sensitivity_uh_per_n: sensitivity,
        hysteresis_pct: hysteresis,
    })
}

/// Linear interpolation on points sorted by x, clamped at the ends.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let i = points.partition_point(|p| p.0 < x);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[points.len() - 1].1;
    }
    let (a, b) = (points[i - 1], points[i]);
    if b.0 == a.0 {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

pub fn write_force_log<W: Write>(writer: W, force: &TimedStream<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "force_n"])?;
    for (t, f) in force.samples() {
        w.write_record([t.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_force_log<R: Read>(reader: R, nominal_hz: f64) -> Result<TimedStream<f64>> {
    #[derive(Deserialize)]
    struct Row {
        t_s: f64,
        force_n: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let samples = rdr
        .deserialize::<Row>()
        .map(|r| r.map(|r| (r.t_s, r.force_n)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    TimedStream::new(samples, nominal_hz)
}
