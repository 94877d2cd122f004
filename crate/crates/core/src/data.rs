//! Event ingestion into region × day × category count tensors, z-score
//! statistics, temporal splits, sliding windows, density degrees and a
//! skew-controlled synthetic generator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Rng};

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Floor applied to the standard deviation of a constant tensor.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Rectangular lat/lon bounding box split into `rows × cols` cells.
///
/// Region index is `r = i * cols + j` with `i` the latitude row and `j` the
/// longitude column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
    /// Informational only.
    pub cell_km: f64,
}

impl GridSpec {
    /// A unit box, for synthetic data without geography.
    pub fn unit(rows: usize, cols: usize) -> Self {
        Self {
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
            rows,
            cols,
            cell_km: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(Error::Config(format!(
                "grid bounds must satisfy lat_min < lat_max and lon_min < lon_max, got \
                 lat [{}, {}] lon [{}, {}]",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid rows and cols must be positive".into()));
        }
        Ok(())
    }

    pub fn regions(&self) -> usize {
        self.rows * self.cols
    }

    /// Cell containing `(lat, lon)`, floor convention with clamping to the
    /// outermost cells. A point on an interior boundary lands in the
    /// higher-index cell.
    pub fn cell_of(&self, lat: f64, lon: f64) -> usize {
        let di = (self.lat_max - self.lat_min) / self.rows as f64;
        let dj = (self.lon_max - self.lon_min) / self.cols as f64;
        let clamp = |v: f64, n: usize| -> usize {
            let f = libm::floor(v);
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        };
        let i = clamp((lat - self.lat_min) / di, self.rows);
        let j = clamp((lon - self.lon_min) / dj, self.cols);
        i * self.cols + j
    }
}

/// One parsed event. Timestamps are Unix seconds (UTC).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub category: String,
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
}

/// Tallies of what ingestion kept and why it dropped the rest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub kept: usize,
    pub out_of_range: usize,
    pub unknown_category: usize,
    pub malformed: usize,
}

impl IngestReport {
    pub fn discarded(&self) -> usize {
        self.out_of_range + self.unknown_category + self.malformed
    }

    pub fn total(&self) -> usize {
        self.kept + self.discarded()
    }
}

/// Daily counts `[R × T × C]` with grid geometry and z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeTensor {
    pub counts: DenseArray,
    pub grid: GridSpec,
    /// Days since 1970-01-01 of slot `t = 0`.
    pub day0: i64,
    pub categories: Vec<String>,
    pub mu: f64,
    pub sigma: f64,
}

impl CrimeTensor {
    /// Wraps counts and computes statistics over the standard training range.
    pub fn new(
        counts: DenseArray,
        grid: GridSpec,
        day0: i64,
        categories: Vec<String>,
    ) -> Result<Self> {
        grid.validate()?;
        let s = counts.shape();
        if s.len() != 3 || s[0] != grid.regions() || s[2] != categories.len() {
            return Err(Error::shape(
                "CrimeTensor",
                s,
                &[grid.regions(), 0, categories.len()],
            ));
        }
        if counts.data().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Data("counts must be non-negative".into()));
        }
        let mut x = Self {
            counts,
            grid,
            day0,
            categories,
            mu: 0.0,
            sigma: 1.0,
        };
        let stats = zscore_stats(&x, default_train_range(x.days()))?;
        x.mu = stats.mu;
        x.sigma = stats.sigma;
        Ok(x)
    }

    pub fn regions(&self) -> usize {
        self.counts.shape()[0]
    }

    pub fn days(&self) -> usize {
        self.counts.shape()[1]
    }

    pub fn num_categories(&self) -> usize {
        self.counts.shape()[2]
    }

    pub fn count(&self, r: usize, t: usize, c: usize) -> f64 {
        self.counts.get(&[r, t, c])
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    /// The daily series of one region and category.
    pub fn series(&self, r: usize, c: usize) -> Vec<f64> {
        (0..self.days()).map(|t| self.count(r, t, c)).collect()
    }
}

/// Accumulates events into a tensor.
pub struct Ingestor {
    grid: GridSpec,
    categories: Vec<String>,
    day0: i64,
    num_days: usize,
    counts: DenseArray,
    report: IngestReport,
}

impl Ingestor {
    pub fn new(
        grid: GridSpec,
        categories: Vec<String>,
        day0: i64,
        num_days: usize,
    ) -> Result<Self> {
        grid.validate()?;
        if num_days == 0 {
            return Err(Error::Config("num_days must be at least 1".into()));
        }
        if categories.is_empty() {
            return Err(Error::Config("at least one category is required".into()));
        }
        let counts = DenseArray::zeros(&[grid.regions(), num_days, categories.len()]);
        Ok(Self {
            grid,
            categories,
            day0,
            num_days,
            counts,
            report: IngestReport::default(),
        })
    }

    pub fn push(&mut self, event: &EventRecord) {
        let Some(c) = self.categories.iter().position(|n| *n == event.category) else {
            self.report.unknown_category += 1;
            return;
        };
        if !event.latitude.is_finite() || !event.longitude.is_finite() {
            self.report.malformed += 1;
            return;
        }
        let day = event.timestamp.div_euclid(SECONDS_PER_DAY) - self.day0;
        if day < 0 || day >= self.num_days as i64 {
            self.report.out_of_range += 1;
            return;
        }
        let r = self.grid.cell_of(event.latitude, event.longitude);
        let idx = [r, day as usize, c];
        let v = self.counts.get(&idx);
        self.counts.set(&idx, v + 1.0);
        self.report.kept += 1;
    }

    /// Records a row the caller could not parse.
    pub fn skip_malformed(&mut self) {
        self.report.malformed += 1;
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn finish(self) -> Result<(CrimeTensor, IngestReport)> {
        if self.report.kept == 0 {
            return Err(Error::Data(format!(
                "no events kept ({} out of range, {} unknown category, {} malformed)",
                self.report.out_of_range, self.report.unknown_category, self.report.malformed
            )));
        }
        let tensor = CrimeTensor::new(self.counts, self.grid, self.day0, self.categories)?;
        Ok((tensor, self.report))
    }
}

/// Builds a tensor from parsed events.
pub fn ingest<'a>(
    events: impl IntoIterator<Item = &'a EventRecord>,
    grid: GridSpec,
    categories: Vec<String>,
    day0: i64,
    num_days: usize,
) -> Result<(CrimeTensor, IngestReport)> {
    let mut ing = Ingestor::new(grid, categories, day0, num_days)?;
    for e in events {
        ing.push(e);
    }
    ing.finish()
}

/// Half-open interval of day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRange {
    pub start: usize,
    pub end: usize,
}

impl DayRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, day: usize) -> bool {
        (self.start..self.end).contains(&day)
    }

    pub fn days(&self) -> core::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScoreStats {
    pub mu: f64,
    pub sigma: f64,
    /// The population deviation was below [`SIGMA_FLOOR`] and was floored.
    pub floored: bool,
}

/// Mean and population standard deviation of every count inside `range`.
pub fn zscore_stats(x: &CrimeTensor, range: DayRange) -> Result<ZScoreStats> {
    if range.is_empty() || range.end > x.days() {
        return Err(Error::Data(format!(
            "statistics range {range:?} empty or beyond {} days",
            x.days()
        )));
    }
    let (r_n, c_n) = (x.regions(), x.num_categories());
    let n = (r_n * range.len() * c_n) as f64;
    let values = || {
        (0..r_n).flat_map(move |r| {
            range
                .days()
                .flat_map(move |t| (0..c_n).map(move |c| x.count(r, t, c)))
        })
    };
    let mu = values().sum::<f64>() / n;
    let var = values().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sigma = libm::sqrt(var);
    let floored = sigma < SIGMA_FLOOR;
    Ok(ZScoreStats {
        mu,
        sigma: if floored { SIGMA_FLOOR } else { sigma },
        floored,
    })
}

/// Test length for a 7:1 train/test split of `num_days`.
fn test_len(num_days: usize) -> usize {
    ((num_days + 4) / 8).max(1)
}

/// Training range of the standard split.
pub fn default_train_range(num_days: usize) -> DayRange {
    DayRange::new(0, num_days.saturating_sub(test_len(num_days)).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Train,
    Valid,
    Test,
}

/// Chronological split: training days (whose tail is the validation
/// range) followed by test days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: DayRange,
    pub valid: DayRange,
    pub test: DayRange,
    pub window: usize,
}

impl SplitPlan {
    /// 7:1 train/test split with the last `valid_days` training days held
    /// out for validation.
    pub fn standard(num_days: usize, window: usize, valid_days: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        let test = test_len(num_days);
        if num_days <= test {
            return Err(Error::Config(format!(
                "{num_days} days cannot be split 7:1"
            )));
        }
        let train_end = num_days - test;
        if valid_days == 0 || valid_days >= train_end {
            return Err(Error::Config(format!(
                "validation span {valid_days} must be within the {train_end} training days"
            )));
        }
        let plan = Self {
            train: DayRange::new(0, train_end),
            valid: DayRange::new(train_end - valid_days, train_end),
            test: DayRange::new(train_end, num_days),
            window,
        };
        plan.validate(num_days)?;
        Ok(plan)
    }

    pub fn validate(&self, num_days: usize) -> Result<()> {
        let ordered = self.train.start < self.train.end
            && self.valid.start >= self.train.start
            && self.valid.end == self.train.end
            && !self.valid.is_empty()
            && self.test.start == self.train.end
            && self.test.end <= num_days
            && !self.test.is_empty();
        if !ordered {
            return Err(Error::Config(format!("inconsistent split plan {self:?}")));
        }
        if self.window >= self.valid.start {
            return Err(Error::Config(format!(
                "window {} leaves no training targets before day {}",
                self.window, self.valid.start
            )));
        }
        Ok(())
    }

    /// Target days of a phase. Training targets stop where validation
    /// begins, so validation days never contribute gradients.
    pub fn target_days(&self, phase: Phase) -> DayRange {
        match phase {
            Phase::Train => DayRange::new(self.train.start.max(self.window), self.valid.start),
            Phase::Valid => self.valid,
            Phase::Test => self.test,
        }
    }
}

/// One supervised example: `[R × T_w × C]` history and `[R × C]` target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub target_day: usize,
    pub input: DenseArray,
    pub target: DenseArray,
}

/// Days `[t - T_w, t)` of `x` as a window.
pub fn window_at(x: &CrimeTensor, t: usize, window: usize) -> Result<Sample> {
    if t < window {
        return Err(Error::Data(format!(
            "day {t} has only {t} days of history, window needs {window}"
        )));
    }
    if t >= x.days() {
        return Err(Error::Index(format!("day {t} beyond {} days", x.days())));
    }
    let (r_n, c_n) = (x.regions(), x.num_categories());
    let mut input = Vec::with_capacity(r_n * window * c_n);
    let mut target = Vec::with_capacity(r_n * c_n);
    for r in 0..r_n {
        for s in t - window..t {
            for c in 0..c_n {
                input.push(x.count(r, s, c));
            }
        }
        for c in 0..c_n {
            target.push(x.count(r, t, c));
        }
    }
    Ok(Sample {
        target_day: t,
        input: DenseArray::new(&[r_n, window, c_n], input)?,
        target: DenseArray::new(&[r_n, c_n], target)?,
    })
}

/// All samples of one phase, in day order.
pub fn windows(x: &CrimeTensor, plan: &SplitPlan, phase: Phase) -> Result<Vec<Sample>> {
    plan.validate(x.days())?;
    let days = plan.target_days(phase);
    if let Some(bad) = days.days().find(|&t| t < plan.window) {
        return Err(Error::Data(format!(
            "window {} exceeds history: day {bad} is the first violating target",
            plan.window
        )));
    }
    days.days().map(|t| window_at(x, t, plan.window)).collect()
}

/// Fraction of days in `range` with a positive count for `(r, c)`.
pub fn density_degree(x: &CrimeTensor, r: usize, c: usize, range: DayRange) -> f64 {
    if range.is_empty() {
        return 0.0;
    }
    let nonzero = range.days().filter(|&t| x.count(r, t, c) > 0.0).count();
    nonzero as f64 / range.len() as f64
}

/// Density buckets `(0, .25]`, `(.25, .5]`, `(.5, .75]`, `(.75, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DensityBucket {
    UpToQuarter,
    UpToHalf,
    UpToThreeQuarters,
    UpToOne,
}

impl DensityBucket {
    pub const ALL: [DensityBucket; 4] = [
        DensityBucket::UpToQuarter,
        DensityBucket::UpToHalf,
        DensityBucket::UpToThreeQuarters,
        DensityBucket::UpToOne,
    ];

    /// `None` for zero density, which belongs to no bucket.
    pub fn of(degree: f64) -> Option<Self> {
        if degree <= 0.0 {
            None
        } else if degree <= 0.25 {
            Some(Self::UpToQuarter)
        } else if degree <= 0.5 {
            Some(Self::UpToHalf)
        } else if degree <= 0.75 {
            Some(Self::UpToThreeQuarters)
        } else {
            Some(Self::UpToOne)
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::UpToQuarter => "(0,0.25]",
            Self::UpToHalf => "(0.25,0.5]",
            Self::UpToThreeQuarters => "(0.5,0.75]",
            Self::UpToOne => "(0.75,1]",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub categories: usize,
    pub num_days: usize,
    /// Power-law exponent of region base rates.
    pub skew_exponent: f64,
    pub patterns: usize,
    /// Mean daily rate of the busiest region.
    pub peak_rate: f64,
    /// Relative amplitude of the weekly cycle.
    pub weekly_amplitude: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(
        grid: GridSpec,
        categories: usize,
        num_days: usize,
        skew_exponent: f64,
        patterns: usize,
        seed: u64,
    ) -> Self {
        Self {
            grid,
            categories,
            num_days,
            skew_exponent,
            patterns,
            peak_rate: 4.0,
            weekly_amplitude: 0.6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub tensor: CrimeTensor,
    /// Planted pattern id of each region.
    pub patterns: Vec<usize>,
    /// Poisson intensity `[R × T × C]` the counts were drawn from.
    pub intensity: DenseArray,
}

/// Poisson counts with intensity `base[r] · weekly[p(r)][t mod 7] · mix[p(r)][c]`,
/// where region base rates follow `peak · rank^(-skew)` over a random
/// ranking and each region belongs to one of `patterns` latent groups.
pub fn synth(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.grid.validate()?;
    if !(cfg.skew_exponent > 0.0) {
        return Err(Error::Config("skew_exponent must be positive".into()));
    }
    if cfg.num_days == 0 || cfg.categories == 0 || cfg.patterns == 0 {
        return Err(Error::Config(
            "num_days, categories and patterns must be positive".into(),
        ));
    }
    if !(cfg.peak_rate > 0.0) || !(0.0..1.0).contains(&cfg.weekly_amplitude) {
        return Err(Error::Config(
            "peak_rate must be positive and weekly_amplitude in [0, 1)".into(),
        ));
    }
    let mut rng = Rng::stream(cfg.seed, Purpose::Synth, 0, 0);
    let (r_n, c_n, t_n) = (cfg.grid.regions(), cfg.categories, cfg.num_days);

    let ranks = rng.permutation(r_n);
    let base: Vec<f64> = ranks
        .iter()
        .map(|&k| cfg.peak_rate * libm::pow(k as f64 + 1.0, -cfg.skew_exponent))
        .collect();

    let order = rng.permutation(r_n);
    let mut patterns = vec![0; r_n];
    for (slot, &r) in order.iter().enumerate() {
        patterns[r] = slot % cfg.patterns;
    }

    let weekly: Vec<[f64; 7]> = (0..cfg.patterns)
        .map(|_| {
            let phase = rng.uniform_range(0.0, 7.0);
            core::array::from_fn(|dow| {
                let angle = 2.0 * core::f64::consts::PI * (dow as f64 + phase) / 7.0;
                1.0 + cfg.weekly_amplitude * libm::sin(angle)
            })
        })
        .collect();
    let mix: Vec<Vec<f64>> = (0..cfg.patterns)
        .map(|_| {
            let raw: Vec<f64> = (0..c_n).map(|_| rng.uniform_range(0.2, 1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v * c_n as f64 / total).collect()
        })
        .collect();

    let mut intensity = DenseArray::zeros(&[r_n, t_n, c_n]);
    let mut counts = DenseArray::zeros(&[r_n, t_n, c_n]);
    for r in 0..r_n {
        let p = patterns[r];
        for t in 0..t_n {
            for c in 0..c_n {
                let lambda = base[r] * weekly[p][t % 7] * mix[p][c];
                intensity.set(&[r, t, c], lambda);
                let draw: f64 = Poisson::new(lambda)
                    .map_err(|e| Error::Numeric {
                        op: "synth",
                        detail: format!("poisson rate {lambda}: {e}"),
                    })?
                    .sample(rng.inner_mut());
                counts.set(&[r, t, c], draw);
            }
        }
    }
    let categories = (0..c_n).map(|c| format!("type{c}")).collect();
    let tensor = CrimeTensor::new(counts, cfg.grid.clone(), 0, categories)?;
    Ok(SynthOutput {
        tensor,
        patterns,
        intensity,
    })
}
