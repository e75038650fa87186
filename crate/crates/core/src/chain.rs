//! Continuous-time Markov chain driving the regime switches.
//!
//! Paths are sampled exactly with exponential holding clocks, independent of
//! any integration grid. Each path draws from its own ChaCha stream so that
//! results do not depend on evaluation order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::TimeGrid;

/// Independent random stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Transition-rate matrix `Π` (units 1/time).
#[derive(Debug, Clone, PartialEq)]
pub struct Generator(Mat);

impl Generator {
    pub fn new(matrix: Mat) -> Result<Self> {
        let g = Self(matrix);
        let problems = g.problems();
        if !g.0.is_square() {
            return Err(Error::Generator("matrix must be square".into()));
        }
        if let Some(p) = problems.into_iter().next() {
            return Err(Error::Generator(p));
        }
        Ok(g)
    }

    /// Wrap without checking; [`crate::GameModel::validate`] reports problems later.
    pub fn unchecked(matrix: Mat) -> Self {
        Self(matrix)
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    /// Total rate of leaving `i`, `-π_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.0[(i, i)]
    }

    /// Violated generator rules, one message each (rows are one-based).
    pub fn problems(&self) -> Vec<String> {
        let pi = &self.0;
        let mut out = Vec::new();
        if !pi.is_square() {
            out.push(format!("generator must be square, got {}x{}", pi.nrows(), pi.ncols()));
            return out;
        }
        for i in 0..pi.nrows() {
            let row = pi.row(i);
            if !row.iter().all(|v| v.is_finite()) {
                out.push(format!("generator row {} has a non-finite entry", i + 1));
                continue;
            }
            for j in 0..pi.ncols() {
                if i != j && row[j] < 0.0 {
                    out.push(format!("generator entry ({}, {}) is negative", i + 1, j + 1));
                }
            }
            let sum: f64 = row.iter().sum();
            let scale: f64 = 1.0 + row.iter().map(|v| v.abs()).sum::<f64>();
            if sum.abs() > 1e-12 * scale {
                out.push(format!("generator row {} sum {sum} != 0", i + 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    /// Zero-based regime entered at `time`.
    pub to: usize,
}

/// Sampled regime trajectory on `[0, T]`, right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub initial: usize,
    pub jumps: Vec<Jump>,
    pub horizon: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainPathFile {
    i0: usize,
    jumps: Vec<(f64, usize)>,
    #[serde(rename = "T")]
    horizon: f64,
}

impl ChainPath {
    pub fn constant(initial: usize, horizon: f64) -> Self {
        Self { initial, jumps: Vec::new(), horizon }
    }

    /// `α(t)`: the regime after all jumps at times `≤ t`.
    pub fn regime_at(&self, t: f64) -> usize {
        let n = self.jumps.partition_point(|j| j.time <= t);
        if n == 0 {
            self.initial
        } else {
            self.jumps[n - 1].to
        }
    }

    /// Maximal constant stretches `(start, end, regime)` covering `[0, T]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        let starts = std::iter::once((0.0, self.initial)).chain(self.jumps.iter().map(|j| (j.time, j.to)));
        let ends = self.jumps.iter().map(|j| j.time).chain(std::iter::once(self.horizon));
        starts.zip(ends).map(|((s, r), e)| (s, e, r))
    }

    /// Checks ordering, range and that consecutive regimes differ.
    pub fn check(&self, regimes: usize) -> Result<()> {
        if self.initial >= regimes {
            return Err(Error::RegimeOutOfRange { value: self.initial + 1, count: regimes });
        }
        let mut prev_t = 0.0;
        let mut prev = self.initial;
        for j in &self.jumps {
            if !(j.time > prev_t && j.time <= self.horizon) {
                return Err(Error::InvalidModel(format!("jump time {} out of order", j.time)));
            }
            if j.to >= regimes {
                return Err(Error::RegimeOutOfRange { value: j.to + 1, count: regimes });
            }
            if j.to == prev {
                return Err(Error::InvalidModel(format!("self-jump at t={}", j.time)));
            }
            prev_t = j.time;
            prev = j.to;
        }
        Ok(())
    }

    /// JSON `{"i0", "jumps": [[t, j], ...], "T"}` with one-based regimes.
    pub fn to_json(&self) -> Result<String> {
        let file = ChainPathFile {
            i0: self.initial + 1,
            jumps: self.jumps.iter().map(|j| (j.time, j.to + 1)).collect(),
            horizon: self.horizon,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChainPathFile = serde_json::from_str(text)?;
        let zero = |v: usize| v.checked_sub(1).ok_or(Error::RegimeOutOfRange { value: 0, count: 0 });
        Ok(Self {
            initial: zero(file.i0)?,
            jumps: file
                .jumps
                .into_iter()
                .map(|(time, to)| Ok(Jump { time, to: zero(to)? }))
                .collect::<Result<_>>()?,
            horizon: file.horizon,
        })
    }
}

/// Exact (Gillespie) sample of the chain on `[0, T]` started at `i0`.
pub fn sample_path_with<R: Rng + ?Sized>(gen: &Generator, i0: usize, horizon: f64, rng: &mut R) -> ChainPath {
    let mut jumps = Vec::new();
    let mut t = 0.0;
    let mut state = i0;
    loop {
        let rate = gen.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = Exp1.sample(rng);
        t += hold / rate;
        if t > horizon {
            break;
        }
        let mut u = rng.gen::<f64>() * rate;
        let mut target = None;
        for j in (0..gen.size()).filter(|&j| j != state) {
            let r = gen.rate(state, j);
            if r <= 0.0 {
                continue;
            }
            target = Some(j);
            if u < r {
                break;
            }
            u -= r;
        }
        // `target` is always set: a positive exit rate means some positive off-diagonal entry.
        let to = target.expect("positive exit rate without a target");
        jumps.push(Jump { time: t, to });
        state = to;
    }
    ChainPath { initial: i0, jumps, horizon }
}

/// Reproducible sample: identical arguments give an identical path.
pub fn sample_path(gen: &Generator, i0: usize, horizon: f64, seed: u64) -> Result<ChainPath> {
    if let Some(p) = gen.problems().into_iter().next() {
        return Err(Error::Generator(p));
    }
    if i0 >= gen.size() {
        return Err(Error::RegimeOutOfRange { value: i0 + 1, count: gen.size() });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
    }
    Ok(sample_path_with(gen, i0, horizon, &mut stream_rng(seed, 0)))
}

/// `Ñ_j(t_k)` for every grid node (rows) and target regime (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedCount {
    pub values: Vec<Vec<f64>>,
}

impl CompensatedCount {
    pub fn at_end(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Jump counts minus their compensators `∫ π_{α(s),j} 1{α(s)≠j} ds`,
/// integrated exactly over the piecewise-constant path.
pub fn compensated_counts(path: &ChainPath, gen: &Generator, grid: &TimeGrid) -> Result<CompensatedCount> {
    if (path.horizon - grid.horizon()).abs() > 1e-12 * grid.horizon().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "path horizon {} vs grid horizon {}",
            path.horizon,
            grid.horizon()
        )));
    }
    let l = gen.size();
    let segments: Vec<_> = path.segments().collect();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut counts = vec![0.0; l];
    let mut comp = vec![0.0; l];
    let mut seg = 0;
    let mut jumps = path.jumps.iter().peekable();
    let mut last_t = 0.0;
    for t in grid.nodes() {
        while let Some(j) = jumps.peek() {
            if j.time > t {
                break;
            }
            counts[j.to] += 1.0;
            jumps.next();
        }
        // Integrate the compensator from `last_t` to `t`.
        while seg < segments.len() {
            let (s0, s1, r) = segments[seg];
            let lo = s0.max(last_t);
            let hi = s1.min(t);
            if hi > lo {
                for (j, c) in comp.iter_mut().enumerate() {
                    if j != r {
                        *c += gen.rate(r, j) * (hi - lo);
                    }
                }
            }
            if s1 <= t {
                seg += 1;
            } else {
                break;
            }
        }
        last_t = t;
        values.push(counts.iter().zip(&comp).map(|(n, c)| n - c).collect());
    }
    Ok(CompensatedCount { values })
}
