//! Supervised datasets, control-driven segmentation of training data, and
//! the segment-parallel training entry point.
//!
//! Long trajectories under piecewise-constant control are cut into blocks at
//! the control switches, the blocks are grouped into a requested number of
//! contiguous segments (non-final segments extend one or more blocks into
//! their successor), and each segment trains its own committee per response
//! dimension. At prediction time a query is routed to the segments whose
//! input bounding box contains it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trainer::{fit_batch, BatchModel, HyperParams};

/// RNG stream carrying the train/test shuffle (streams 0 and 1 drive the
/// simulators' process and measurement noise).
pub const SPLIT_STREAM: u64 = 2;

/// First RNG stream used for constant-response noise injection; segment `s`,
/// response `r` of a `q`-response dataset draws from stream
/// `INJECTION_STREAM_BASE + s * q + r`.
pub const INJECTION_STREAM_BASE: u64 = 3;

/// Standard deviation of the noise injected into a constant response
/// (variance 1e-8).
pub const CONSTANT_RESPONSE_NOISE_STD: f64 = 1e-4;

/// Default partition counts for trajectory data indexed by normalized speed,
/// as (speed, partitions) rows: faster trajectories revisit fewer states per
/// segment, so they need fewer partitions. Configuration data, not logic.
pub const SPEED_PARTITION_DEFAULTS: [(f64, usize); 5] =
    [(0.2, 20), (0.4, 10), (0.6, 6), (0.8, 5), (1.0, 4)];

/// A supervised regression dataset: one input row per sample, one response
/// row per sample, with optional bookkeeping for which input column holds
/// the control signal and which holds the sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    /// Column of `inputs` holding the control signal, if any.
    pub control_column: Option<usize>,
    /// Column of `inputs` holding the sample times, if any.
    pub time_column: Option<usize>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn response_dim(&self) -> usize {
        self.responses.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.nrows() == 0 || self.inputs.ncols() == 0 {
            return Err(Error::invalid("dataset has no input data"));
        }
        if self.responses.nrows() != self.inputs.nrows() {
            return Err(Error::invalid(format!(
                "{} input rows but {} response rows",
                self.inputs.nrows(),
                self.responses.nrows()
            )));
        }
        if self.responses.ncols() == 0 {
            return Err(Error::invalid("dataset has no response columns"));
        }
        for (name, col) in [("control", self.control_column), ("time", self.time_column)] {
            if let Some(c) = col {
                if c >= self.inputs.ncols() {
                    return Err(Error::invalid(format!(
                        "{name} column index {c} out of range for {} input columns",
                        self.inputs.ncols()
                    )));
                }
            }
        }
        if let (Some(c), Some(t)) = (self.control_column, self.time_column) {
            if c == t {
                return Err(Error::invalid("control and time cannot share a column"));
            }
        }
        if self.inputs.iter().any(|v| !v.is_finite())
            || self.responses.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    /// The input row `i` as a column vector.
    pub fn input_row(&self, i: usize) -> DVector<f64> {
        self.inputs.row(i).transpose()
    }

    /// Values of the control column, if the dataset has one.
    pub fn control_values(&self) -> Option<DVector<f64>> {
        self.control_column.map(|c| self.inputs.column(c).into_owned())
    }

    /// Values of the time column, if the dataset has one.
    pub fn sample_times(&self) -> Option<DVector<f64>> {
        self.time_column.map(|c| self.inputs.column(c).into_owned())
    }

    /// A new dataset holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows.iter()),
            responses: self.responses.select_rows(rows.iter()),
            control_column: self.control_column,
            time_column: self.time_column,
        }
    }
}

/// Splits off a random test set: `round(N * test_fraction)` rows, drawn by a
/// seeded shuffle. Both halves keep the shuffled row order.
pub fn train_test_split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    data.validate()?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.n_samples();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} leaves an empty side of the split for {n} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let test = data.select_rows(&indices[..n_test]);
    let train = data.select_rows(&indices[n_test..]);
    Ok((train, test))
}

/// Indices `i` where `control[i] != control[i-1]`; empty for a constant (or
/// empty) signal.
pub fn find_control_changes(control: &DVector<f64>) -> Vec<usize> {
    (1..control.len())
        .filter(|&i| control[i] != control[i - 1])
        .collect()
}

/// A contiguous run of training rows plus the axis-aligned bounding box of
/// its inputs. The box is empty until the segment is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Half-open row interval into the training dataset.
    pub start: usize,
    pub end: usize,
    /// Per-input-dimension closed intervals, populated during training.
    pub input_bounds: Vec<(f64, f64)>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn rows(&self) -> Vec<usize> {
        (self.start..self.end).collect()
    }

    /// Whether the bounding box contains `x` (closed intervals).
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.input_bounds.len() == x.len()
            && x.iter()
                .zip(&self.input_bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Squared distance from `x` to the bounding box (zero inside).
    pub fn box_distance_sq(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(&self.input_bounds)
            .map(|(v, (lo, hi))| {
                let gap = if *v < *lo {
                    lo - v
                } else if *v > *hi {
                    v - hi
                } else {
                    0.0
                };
                gap * gap
            })
            .sum()
    }
}

/// Groups the control-action blocks implied by `changes` into
/// `segments_requested` contiguous segments over `n` rows.
///
/// Blocks are grouped evenly, with only the final group allowed to differ in
/// size; every non-final segment is then extended `overlap_blocks` blocks
/// into its successor. The returned segments carry empty bounding boxes.
pub fn build_segments(
    changes: &[usize],
    n: usize,
    segments_requested: usize,
    overlap_blocks: usize,
) -> Result<Vec<Segment>> {
    if n == 0 {
        return Err(Error::invalid("cannot segment an empty dataset"));
    }
    if segments_requested == 0 {
        return Err(Error::invalid("at least one segment is required"));
    }
    let mut starts = Vec::with_capacity(changes.len() + 1);
    starts.push(0);
    for &c in changes {
        if c == 0 || c >= n || Some(&c) <= starts.last() {
            return Err(Error::invalid(format!(
                "control-change indices must be strictly increasing within (0, {n}), got {c}"
            )));
        }
        starts.push(c);
    }
    let blocks = starts.len();
    if segments_requested > blocks {
        return Err(Error::invalid(format!(
            "{segments_requested} segments requested but the control signal only defines {blocks} block(s)"
        )));
    }
    let block_start = |b: usize| -> usize {
        if b >= blocks {
            n
        } else {
            starts[b]
        }
    };

    let s = segments_requested;
    let mut base = ((blocks as f64 / s as f64).round() as usize).max(1);
    if s > 1 {
        // Guarantees every group gets at least one block even when rounding
        // overshoots.
        base = base.min((blocks - 1) / (s - 1));
    }
    let mut segments = Vec::with_capacity(s);
    for g in 0..s {
        let first_block = g * base;
        let end_block = if g == s - 1 {
            blocks
        } else {
            ((g + 1) * base + overlap_blocks).min(blocks)
        };
        segments.push(Segment {
            start: block_start(first_block),
            end: block_start(end_block),
            input_bounds: Vec::new(),
        });
    }
    Ok(segments)
}

/// Returns `y` unchanged unless its population variance is exactly zero, in
/// which case i.i.d. zero-mean Gaussian noise with standard deviation
/// `noise_std` is added (drawn from the given seed and stream).
pub fn ensure_nonzero_variance(
    y: &DVector<f64>,
    noise_std: f64,
    seed: u64,
    stream: u64,
) -> DVector<f64> {
    let n = y.len();
    if n == 0 {
        return y.clone();
    }
    let mean = y.mean();
    let variance = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if variance != 0.0 {
        return y.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    y.map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal))
}

/// All segment indices whose bounding box contains `x`; when none does, the
/// single segment with the smallest exterior distance (lowest index on ties).
pub fn segments_containing(x: &DVector<f64>, segments: &[Segment]) -> Result<Vec<usize>> {
    if segments.is_empty() {
        return Err(Error::invalid("no segments to match against"));
    }
    let inside: Vec<usize> = segments
        .iter()
        .enumerate()
        .filter_map(|(i, seg)| seg.contains(x).then_some(i))
        .collect();
    if !inside.is_empty() {
        return Ok(inside);
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, seg) in segments.iter().enumerate() {
        if seg.input_bounds.len() != x.len() {
            return Err(Error::invalid("segment bounds do not match the query dimension"));
        }
        let d = seg.box_distance_sq(x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(vec![best])
}

/// A fully trained model: the segment geometry plus one committee per
/// (response dimension, segment) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedModel {
    pub segments: Vec<Segment>,
    /// Indexed as `batch_models[response][segment]`.
    pub batch_models: Vec<Vec<BatchModel>>,
}

impl SegmentedModel {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn response_dim(&self) -> usize {
        self.batch_models.len()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.batch_models.first().and_then(|row| row.first()).map(|m| m.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.batch_models.is_empty() {
            return Err(Error::invalid("segmented model has no segments or no responses"));
        }
        let d = self.input_dim().unwrap_or(0);
        for row in &self.batch_models {
            if row.len() != self.segments.len() {
                return Err(Error::invalid(
                    "each response needs exactly one committee per segment",
                ));
            }
            if row.iter().any(|m| m.input_dim != d) {
                return Err(Error::invalid("committees disagree on the input dimension"));
            }
        }
        for seg in &self.segments {
            if seg.is_empty() {
                return Err(Error::invalid("segments must be non-empty"));
            }
            if seg.input_bounds.len() != d {
                return Err(Error::invalid("segment bounds do not match the input dimension"));
            }
        }
        Ok(())
    }
}

/// Knobs of [`train_segmented`] that are not model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub segments_requested: usize,
    /// Blocks each non-final segment extends into its successor.
    pub overlap_blocks: usize,
    /// Master seed for constant-response noise injection.
    pub noise_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            segments_requested: 1,
            overlap_blocks: 1,
            noise_seed: 0,
        }
    }
}

/// Outcome of one (response, segment) fit, in report order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFitStats {
    pub response: usize,
    pub segment: usize,
    /// Training error after the final sweep; absent when no sweep ran.
    pub training_nmse: Option<f64>,
    pub local_models: usize,
    pub iterations: usize,
}

/// Per-fit statistics for every (response, segment) pair, ordered by
/// response then segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub stats: Vec<SegmentFitStats>,
}

/// Segments the training data at its control changes and fits one committee
/// per (response dimension, segment), in parallel.
///
/// Constant response slices get a tiny noise injection (deterministic per
/// segment and response) so the error normalization stays defined.
pub fn train_segmented(
    data: &Dataset,
    params: &HyperParams,
    opts: &TrainOptions,
) -> Result<(SegmentedModel, TrainReport)> {
    data.validate()?;
    params.validate()?;

    let changes = match data.control_values() {
        Some(control) => find_control_changes(&control),
        None => Vec::new(),
    };
    let mut segments = build_segments(
        &changes,
        data.n_samples(),
        opts.segments_requested,
        opts.overlap_blocks,
    )?;

    for seg in &mut segments {
        let mut bounds = Vec::with_capacity(data.input_dim());
        for j in 0..data.input_dim() {
            let col = data.inputs.column(j);
            let slice = col.rows_range(seg.start..seg.end);
            bounds.push((slice.min(), slice.max()));
        }
        seg.input_bounds = bounds;
    }

    let q = data.response_dim();
    let jobs: Vec<(usize, usize)> = (0..q)
        .flat_map(|r| (0..segments.len()).map(move |s| (r, s)))
        .collect();

    let fitted: Vec<(usize, usize, BatchModel, SegmentFitStats)> = jobs
        .par_iter()
        .map(|&(r, s)| {
            let seg = &segments[s];
            let rows = seg.rows();
            let seg_inputs = data.inputs.select_rows(rows.iter());
            let raw = DVector::from_iterator(
                rows.len(),
                rows.iter().map(|&i| data.responses[(i, r)]),
            );
            let targets = ensure_nonzero_variance(
                &raw,
                CONSTANT_RESPONSE_NOISE_STD,
                opts.noise_seed,
                INJECTION_STREAM_BASE + (s as u64) * (q as u64) + r as u64,
            );
            let (model, report) = fit_batch(&seg_inputs, &targets, params)?;
            let stats = SegmentFitStats {
                response: r,
                segment: s,
                training_nmse: report.final_nmse(),
                local_models: model.local_models.len(),
                iterations: report.iterations,
            };
            Ok((r, s, model, stats))
        })
        .collect::<Result<_>>()?;

    let mut batch_models: Vec<Vec<Option<BatchModel>>> = vec![vec![None; segments.len()]; q];
    let mut stats: Vec<Option<SegmentFitStats>> = vec![None; q * segments.len()];
    for (r, s, model, st) in fitted {
        batch_models[r][s] = Some(model);
        stats[r * segments.len() + s] = Some(st);
    }
    let model = SegmentedModel {
        segments,
        batch_models: batch_models
            .into_iter()
            .map(|row| row.into_iter().map(|m| m.unwrap()).collect())
            .collect(),
    };
    let report = TrainReport {
        stats: stats.into_iter().map(|s| s.unwrap()).collect(),
    };
    Ok((model, report))
}
