//! Reported summary statistics, the summary map applied to pseudo-data, and
//! the distance between observed and simulated summaries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reportable summary statistic. The declaration order is the canonical
/// order used for summary vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Min,
    Q1,
    Median,
    Q3,
    Max,
    Mean,
    Sd,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::Min,
        Field::Q1,
        Field::Median,
        Field::Q3,
        Field::Max,
        Field::Mean,
        Field::Sd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Min => "min",
            Field::Q1 => "q1",
            Field::Median => "median",
            Field::Q3 => "q3",
            Field::Max => "max",
            Field::Mean => "mean",
            Field::Sd => "sd",
        }
    }

    /// Probability level for the quantile-type fields.
    fn quantile_level(self) -> Option<f64> {
        match self {
            Field::Q1 => Some(0.25),
            Field::Median => Some(0.5),
            Field::Q3 => Some(0.75),
            _ => None,
        }
    }

    /// Fields that carry a location (everything but the SD).
    pub fn is_location(self) -> bool {
        self != Field::Sd
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min" | "minimum" => Ok(Field::Min),
            "q1" => Ok(Field::Q1),
            "median" | "q2" => Ok(Field::Median),
            "q3" => Ok(Field::Q3),
            "max" | "maximum" => Ok(Field::Max),
            "mean" => Ok(Field::Mean),
            "sd" => Ok(Field::Sd),
            other => Err(Error::Parse(format!(
                "unknown statistic `{other}` (expected one of min, q1, median, q3, max, mean, sd)"
            ))),
        }
    }
}

/// Which statistics a study reports (besides `n`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SummaryScenario {
    /// min, median, max
    S1,
    /// min, q1, median, q3, max
    S2,
    /// q1, median, q3
    S3,
    /// Any non-empty field set containing a location statistic; kept sorted.
    Custom(Vec<Field>),
}

impl SummaryScenario {
    pub fn custom(fields: impl IntoIterator<Item = Field>) -> Result<Self> {
        let mut fields: Vec<Field> = fields.into_iter().collect();
        fields.sort();
        fields.dedup();
        if !fields.iter().any(|f| f.is_location()) {
            return Err(Error::InvalidStats(
                "a custom scenario needs at least one location statistic".into(),
            ));
        }
        Ok(SummaryScenario::Custom(fields))
    }

    pub fn fields(&self) -> &[Field] {
        match self {
            SummaryScenario::S1 => &[Field::Min, Field::Median, Field::Max],
            SummaryScenario::S2 => &[Field::Min, Field::Q1, Field::Median, Field::Q3, Field::Max],
            SummaryScenario::S3 => &[Field::Q1, Field::Median, Field::Q3],
            SummaryScenario::Custom(fields) => fields,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SummaryScenario::S1 => "S1",
            SummaryScenario::S2 => "S2",
            SummaryScenario::S3 => "S3",
            SummaryScenario::Custom(_) => "custom",
        }
    }
}

impl fmt::Display for SummaryScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SummaryScenario {
    type Err = Error;

    /// Parses `S1`, `S2` or `S3`. Custom scenarios are built from the fields
    /// actually supplied, see [`SummaryStats::from_record`].
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(SummaryScenario::S1),
            "S2" => Ok(SummaryScenario::S2),
            "S3" => Ok(SummaryScenario::S3),
            other => Err(Error::Parse(format!(
                "unknown scenario `{other}` (expected S1, S2, S3 or custom)"
            ))),
        }
    }
}

/// How sample quantiles are interpolated between order statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileRule {
    /// Linear interpolation at 1-based position h = (n-1)p + 1.
    #[default]
    Type7,
    /// Linear interpolation at 1-based position h = (n+1)p, clamped to [1, n].
    Type6,
}

impl QuantileRule {
    /// 0-based lower order-statistic index and interpolation weight.
    fn position(self, n: usize, p: f64) -> (usize, f64) {
        let h = match self {
            QuantileRule::Type7 => (n - 1) as f64 * p,
            QuantileRule::Type6 => ((n + 1) as f64 * p - 1.0).clamp(0.0, (n - 1) as f64),
        };
        let j = h.floor() as usize;
        (j.min(n - 1), h - h.floor())
    }
}

impl FromStr for QuantileRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "type7" | "7" => Ok(QuantileRule::Type7),
            "type6" | "6" => Ok(QuantileRule::Type6),
            other => Err(Error::Parse(format!("unknown quantile rule `{other}`"))),
        }
    }
}

/// The statistics reported by one study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    scenario: SummaryScenario,
    n: usize,
    values: BTreeMap<Field, f64>,
}

impl SummaryStats {
    /// Validates that exactly the scenario's fields are present, that they
    /// are finite and that their ordering is consistent.
    pub fn new(
        scenario: SummaryScenario,
        n: usize,
        values: impl IntoIterator<Item = (Field, f64)>,
    ) -> Result<Self> {
        let values: BTreeMap<Field, f64> = values.into_iter().collect();
        if n < 2 {
            return Err(Error::InvalidStats(format!(
                "sample size n must be at least 2, got {n}"
            )));
        }
        let expected = scenario.fields();
        for field in expected {
            if !values.contains_key(field) {
                return Err(Error::InvalidStats(format!(
                    "scenario {scenario} requires `{field}`"
                )));
            }
        }
        if let Some(extra) = values.keys().find(|f| !expected.contains(f)) {
            return Err(Error::InvalidStats(format!(
                "`{extra}` is not part of scenario {scenario}"
            )));
        }
        for (field, value) in &values {
            if !value.is_finite() {
                return Err(Error::InvalidStats(format!("`{field}` is not finite")));
            }
        }
        let stats = SummaryStats {
            scenario,
            n,
            values,
        };
        stats.check_ordering()?;
        Ok(stats)
    }

    fn check_ordering(&self) -> Result<()> {
        let chain: Vec<(Field, f64)> =
            [Field::Min, Field::Q1, Field::Median, Field::Q3, Field::Max]
                .into_iter()
                .filter_map(|f| self.get(f).map(|v| (f, v)))
                .collect();
        for pair in chain.windows(2) {
            let ((lo_f, lo), (hi_f, hi)) = (pair[0], pair[1]);
            if lo > hi {
                return Err(Error::InvalidStats(format!(
                    "{lo_f} ({lo}) exceeds {hi_f} ({hi})"
                )));
            }
        }
        if let Some(mean) = self.get(Field::Mean) {
            if let Some(min) = self.get(Field::Min) {
                if mean < min {
                    return Err(Error::InvalidStats(format!(
                        "mean ({mean}) is below min ({min})"
                    )));
                }
            }
            if let Some(max) = self.get(Field::Max) {
                if mean > max {
                    return Err(Error::InvalidStats(format!(
                        "mean ({mean}) exceeds max ({max})"
                    )));
                }
            }
        }
        if let Some(sd) = self.get(Field::Sd) {
            if sd < 0.0 {
                return Err(Error::InvalidStats(format!("sd ({sd}) is negative")));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> &SummaryScenario {
        &self.scenario
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        self.values.get(&field).copied()
    }

    pub fn values(&self) -> impl Iterator<Item = (Field, f64)> + '_ {
        self.values.iter().map(|(f, v)| (*f, *v))
    }

    /// Maps data known to live in `[lo, hi]` onto the unit interval.
    pub fn rescale(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidStats(format!(
                "invalid rescaling bounds [{lo}, {hi}]"
            )));
        }
        let width = hi - lo;
        let values = self.values.iter().map(|(&f, &v)| {
            let scaled = if f == Field::Sd {
                v / width
            } else {
                (v - lo) / width
            };
            (f, scaled)
        });
        SummaryStats::new(self.scenario.clone(), self.n, values)
    }

    /// Parses `scenario=S3 n=111 q1=1.2 median=2.1 q3=4.6`. With
    /// `scenario=custom` (or no scenario) the field set is whatever is given.
    pub fn from_record(record: &str) -> Result<Self> {
        let mut scenario = None;
        let mut n = None;
        let mut values = BTreeMap::new();
        for token in record.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            match key.to_ascii_lowercase().as_str() {
                "scenario" => {
                    scenario = if value.eq_ignore_ascii_case("custom") {
                        None
                    } else {
                        Some(value.parse::<SummaryScenario>()?)
                    }
                }
                "n" => {
                    n = Some(value.parse::<usize>().map_err(|_| {
                        Error::Parse(format!("n must be a positive integer, got `{value}`"))
                    })?)
                }
                other => {
                    let field: Field = other.parse()?;
                    let v: f64 = value.parse().map_err(|_| {
                        Error::Parse(format!("`{other}` is not a number: `{value}`"))
                    })?;
                    if values.insert(field, v).is_some() {
                        return Err(Error::Parse(format!("`{field}` given twice")));
                    }
                }
            }
        }
        let n = n.ok_or_else(|| Error::Parse("missing n".into()))?;
        let scenario = match scenario {
            Some(s) => s,
            None => SummaryScenario::custom(values.keys().copied())?,
        };
        SummaryStats::new(scenario, n, values)
    }

    pub fn to_record(&self) -> String {
        let mut out = format!("scenario={} n={}", self.scenario.name(), self.n);
        for (field, value) in &self.values {
            out.push_str(&format!(" {field}={value}"));
        }
        out
    }
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

/// Canonically ordered summary vector; `n` is never part of it.
pub fn summary_vector(stats: &SummaryStats) -> Vec<f64> {
    stats.values.values().copied().collect()
}

/// Euclidean distance between two summary vectors.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Distance with per-coordinate weights; `weights` must match in length.
pub fn weighted_distance(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    debug_assert!(a.len() == b.len() && a.len() == weights.len());
    a.iter()
        .zip(b)
        .zip(weights)
        .map(|((x, y), w)| {
            let d = w * (x - y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Per-field scaling applied before the Euclidean distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceScaling {
    #[default]
    Raw,
    /// Each coordinate difference is divided by the magnitude of the observed value.
    Relative,
}

impl DistanceScaling {
    pub fn weights(self, observed: &[f64]) -> Vec<f64> {
        match self {
            DistanceScaling::Raw => vec![1.0; observed.len()],
            DistanceScaling::Relative => observed
                .iter()
                .map(|v| if *v != 0.0 { 1.0 / v.abs() } else { 1.0 })
                .collect(),
        }
    }
}

impl FromStr for DistanceScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(DistanceScaling::Raw),
            "relative" => Ok(DistanceScaling::Relative),
            other => Err(Error::Parse(format!("unknown distance scaling `{other}`"))),
        }
    }
}

/// Summary of one pseudo-dataset: the scenario vector plus its sample mean/SD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoSummary {
    vector: [f64; 7],
    len: usize,
    pub mean: f64,
    pub sd: f64,
}

impl PseudoSummary {
    pub fn vector(&self) -> &[f64] {
        &self.vector[..self.len]
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.sd.is_finite() && self.vector().iter().all(|v| v.is_finite())
    }
}

/// Computes a fixed field set from raw samples; reused across ABC iterations.
#[derive(Clone, Debug)]
pub struct Summarizer {
    fields: Vec<Field>,
    rule: QuantileRule,
}

impl Summarizer {
    pub fn new(scenario: &SummaryScenario, rule: QuantileRule) -> Self {
        Summarizer {
            fields: scenario.fields().to_vec(),
            rule,
        }
    }

    /// Reorders `data` in place. `data.len()` must be at least 2.
    pub fn summarize(&self, data: &mut [f64]) -> PseudoSummary {
        let n = data.len();
        debug_assert!(n >= 2);
        let mean = data.iter().sum::<f64>() / n as f64;
        let ss: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();

        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        if self.fields.contains(&Field::Min) || self.fields.contains(&Field::Max) {
            for &x in data.iter() {
                min = min.min(x);
                max = max.max(x);
            }
        }

        // Order statistics needed by the quantile fields, selected in ascending order.
        let mut positions = [0usize; 6];
        let mut n_pos = 0;
        for field in &self.fields {
            if let Some(p) = field.quantile_level() {
                let (j, frac) = self.rule.position(n, p);
                positions[n_pos] = j;
                n_pos += 1;
                if frac > 0.0 && j + 1 < n {
                    positions[n_pos] = j + 1;
                    n_pos += 1;
                }
            }
        }
        let positions = &mut positions[..n_pos];
        positions.sort_unstable();
        let mut lo = 0;
        for &pos in positions.iter() {
            if pos < lo {
                continue;
            }
            data[lo..].select_nth_unstable_by(pos - lo, f64::total_cmp);
            lo = pos + 1;
        }

        let mut vector = [0.0; 7];
        for (slot, field) in vector.iter_mut().zip(&self.fields) {
            *slot = match field {
                Field::Min => min,
                Field::Max => max,
                Field::Mean => mean,
                Field::Sd => sd,
                q => {
                    let (j, frac) = self.rule.position(n, q.quantile_level().unwrap_or(0.5));
                    if frac > 0.0 && j + 1 < n {
                        data[j] + frac * (data[j + 1] - data[j])
                    } else {
                        data[j]
                    }
                }
            };
        }
        PseudoSummary {
            vector,
            len: self.fields.len(),
            mean,
            sd,
        }
    }
}

/// Computes the scenario's statistics from raw data using the default
/// quantile rule.
pub fn compute_summary(data: &[f64], scenario: &SummaryScenario) -> Result<SummaryStats> {
    compute_summary_with(data, scenario, QuantileRule::default())
}

pub fn compute_summary_with(
    data: &[f64],
    scenario: &SummaryScenario,
    rule: QuantileRule,
) -> Result<SummaryStats> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(data.len()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidStats("data contain non-finite values".into()));
    }
    // Sorting first makes the result independent of the input order,
    // including the rounding of the mean/SD sums.
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let summary = Summarizer::new(scenario, rule).summarize(&mut sorted);
    let values = scenario
        .fields()
        .iter()
        .copied()
        .zip(summary.vector().iter().copied());
    SummaryStats::new(scenario.clone(), data.len(), values)
}

/// Sample mean and SD (n - 1 denominator).
pub fn mean_sd(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
