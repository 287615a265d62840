//! The candidate distribution families, their moments, and uniform priors
//! over their parameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, LogNormal, Normal, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;
use crate::summaries::{Field, SummaryStats};

/// Lower bound substituted for zero on scale and shape priors.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    LogNormal,
    Weibull,
    Beta,
    Exponential,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Normal,
        Family::LogNormal,
        Family::Weibull,
        Family::Beta,
        Family::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::LogNormal => "lognormal",
            Family::Weibull => "weibull",
            Family::Beta => "beta",
            Family::Exponential => "exponential",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal | Family::LogNormal => &["mu", "sigma"],
            Family::Weibull => &["shape", "scale"],
            Family::Beta => &["alpha", "beta"],
            Family::Exponential => &["mean"],
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    /// Whether parameter `index` must be strictly positive.
    pub fn requires_positive(self, index: usize) -> bool {
        !matches!((self, index), (Family::Normal | Family::LogNormal, 0))
    }

    /// Support is (0, inf).
    pub fn positive_support(self) -> bool {
        matches!(
            self,
            Family::LogNormal | Family::Weibull | Family::Exponential
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "lognormal" | "log-normal" | "ln" => Ok(Family::LogNormal),
            "weibull" => Ok(Family::Weibull),
            "beta" => Ok(Family::Beta),
            "exponential" | "exp" => Ok(Family::Exponential),
            other => Err(Error::Parse(format!(
                "unknown family `{other}` (expected one of normal, lognormal, weibull, beta, exponential)"
            ))),
        }
    }
}

/// A family together with valid parameter values.
///
/// Parameter order: Normal/LogNormal `(mu, sigma)`, Weibull `(shape, scale)`,
/// Beta `(alpha, beta)`, Exponential `(mean)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    family: Family,
    values: [f64; 2],
}

impl FamilyParams {
    pub fn new(family: Family, params: &[f64]) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidParams {
            family: family.name(),
            reason,
        };
        if params.len() != family.arity() {
            return Err(invalid(format!(
                "expected {} parameter(s), got {}",
                family.arity(),
                params.len()
            )));
        }
        for (i, &v) in params.iter().enumerate() {
            let name = family.param_names()[i];
            if !v.is_finite() {
                return Err(invalid(format!("{name} is not finite")));
            }
            if family.requires_positive(i) && v <= 0.0 {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let mut values = [0.0; 2];
        values[..params.len()].copy_from_slice(params);
        Ok(FamilyParams { family, values })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Normal, &[mu, sigma])
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::LogNormal, &[mu, sigma])
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Weibull, &[shape, scale])
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Beta, &[alpha, beta])
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(Family::Exponential, &[mean])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.values[..self.family.arity()]
    }

    /// Theoretical mean and standard deviation.
    pub fn analytic_moments(&self) -> (f64, f64) {
        let [a, b] = self.values;
        match self.family {
            Family::Normal => (a, b),
            Family::LogNormal => {
                let mean = (a + 0.5 * b * b).exp();
                (mean, mean * (b * b).exp_m1().sqrt())
            }
            Family::Weibull => {
                let (shape, scale) = (a, b);
                let g1 = gamma(1.0 + 1.0 / shape);
                let g2 = gamma(1.0 + 2.0 / shape);
                (scale * g1, scale * (g2 - g1 * g1).max(0.0).sqrt())
            }
            Family::Beta => {
                let s = a + b;
                (a / s, (a * b / (s * s * (s + 1.0))).sqrt())
            }
            Family::Exponential => (a, a),
        }
    }

    /// Appends `n` independent draws to `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Vec<f64>) {
        fn fill<D: Distribution<f64>, R: Rng + ?Sized>(
            d: D,
            n: usize,
            rng: &mut R,
            out: &mut Vec<f64>,
        ) {
            out.extend((0..n).map(|_| d.sample(rng)));
        }
        let [a, b] = self.values;
        // Parameters were validated at construction, so the constructors cannot fail.
        match self.family {
            Family::Normal => fill(Normal::new(a, b).expect("validated"), n, rng, out),
            Family::LogNormal => fill(LogNormal::new(a, b).expect("validated"), n, rng, out),
            Family::Weibull => fill(Weibull::new(b, a).expect("validated"), n, rng, out),
            Family::Beta => fill(Beta::new(a, b).expect("validated"), n, rng, out),
            Family::Exponential => fill(Exp::new(1.0 / a).expect("validated"), n, rng, out),
        }
    }
}

impl fmt::Display for FamilyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family)?;
        for (i, v) in self.params().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Draws `n >= 2` independent values from `params`.
pub fn sample_n<R: Rng + ?Sized>(params: &FamilyParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InsufficientData(n));
    }
    let mut out = Vec::with_capacity(n);
    params.sample_into(n, rng, &mut out);
    Ok(out)
}

pub fn analytic_moments(params: &FamilyParams) -> (f64, f64) {
    params.analytic_moments()
}

/// A uniform prior interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidPrior(format!(
                "interval [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        Ok(Interval { lo, hi })
    }

    /// Interval for a positive parameter; a lower bound of exactly zero is
    /// lifted to [`POSITIVITY_FLOOR`].
    pub fn positive(lo: f64, hi: f64) -> Result<Self> {
        if lo < 0.0 {
            return Err(Error::InvalidPrior(format!(
                "interval [{lo}, {hi}] admits non-positive values"
            )));
        }
        Interval::new(if lo == 0.0 { POSITIVITY_FLOOR } else { lo }, hi)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn at(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyPrior {
    family: Family,
    intervals: Vec<Interval>,
}

impl FamilyPrior {
    pub fn new(family: Family, intervals: Vec<Interval>) -> Result<Self> {
        if intervals.len() != family.arity() {
            return Err(Error::InvalidPrior(format!(
                "{family} needs {} interval(s), got {}",
                family.arity(),
                intervals.len()
            )));
        }
        for (i, iv) in intervals.iter().enumerate() {
            if family.requires_positive(i) && iv.lo <= 0.0 {
                return Err(Error::InvalidPrior(format!(
                    "{family} {} prior {iv} admits non-positive draws",
                    family.param_names()[i]
                )));
            }
        }
        Ok(FamilyPrior { family, intervals })
    }

    /// Builds from `(lo, hi)` pairs, lifting zero lower bounds of positive
    /// parameters to the positivity floor.
    pub fn from_bounds(family: Family, bounds: &[(f64, f64)]) -> Result<Self> {
        let intervals = bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                if family.requires_positive(i) {
                    Interval::positive(lo, hi)
                } else {
                    Interval::new(lo, hi)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        FamilyPrior::new(family, intervals)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FamilyParams {
        let mut values = [0.0; 2];
        for (v, iv) in values.iter_mut().zip(&self.intervals) {
            *v = iv.at(rng.random::<f64>());
        }
        FamilyParams {
            family: self.family,
            values,
        }
    }
}

/// Why a family was dropped from, or flagged in, a default prior bank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorWarning {
    pub family: Family,
    pub dropped: bool,
    pub reason: String,
}

impl fmt::Display for PriorWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = if self.dropped { "dropped" } else { "flagged" };
        write!(f, "{} {what}: {}", self.family, self.reason)
    }
}

/// Uniform priors for a set of families plus the model-weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorBank {
    priors: Vec<FamilyPrior>,
    weights: Vec<f64>,
    warnings: Vec<PriorWarning>,
}

impl PriorBank {
    /// Bank with uniform model weights. Families are kept in canonical order.
    pub fn new(priors: Vec<FamilyPrior>) -> Result<Self> {
        let k = priors.len();
        Self::with_weights(priors, vec![1.0 / k.max(1) as f64; k])
    }

    /// Weights are normalized; each must be positive.
    pub fn with_weights(priors: Vec<FamilyPrior>, weights: Vec<f64>) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::NoActiveFamilies);
        }
        if weights.len() != priors.len() {
            return Err(Error::InvalidPrior(
                "one model weight per family is required".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidPrior("model weights must be positive".into()));
        }
        let mut pairs: Vec<(FamilyPrior, f64)> = priors.into_iter().zip(weights).collect();
        pairs.sort_by_key(|(p, _)| p.family);
        if pairs.windows(2).any(|w| w[0].0.family == w[1].0.family) {
            return Err(Error::InvalidPrior("a family appears twice".into()));
        }
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        let (priors, weights) = pairs.into_iter().map(|(p, w)| (p, w / total)).unzip();
        Ok(PriorBank {
            priors,
            weights,
            warnings: Vec::new(),
        })
    }

    pub fn families(&self) -> Vec<Family> {
        self.priors.iter().map(|p| p.family).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn priors(&self) -> &[FamilyPrior] {
        &self.priors
    }

    pub fn warnings(&self) -> &[PriorWarning] {
        &self.warnings
    }

    pub fn get(&self, family: Family) -> Option<&FamilyPrior> {
        self.priors.iter().find(|p| p.family == family)
    }

    /// Sub-bank over `families` with uniform weights.
    pub fn restrict(&self, families: &[Family]) -> Result<Self> {
        let priors = families
            .iter()
            .map(|&f| self.get(f).cloned().ok_or(Error::InactiveFamily(f.name())))
            .collect::<Result<Vec<_>>>()?;
        let mut bank = PriorBank::new(priors)?;
        bank.warnings = self.warnings.clone();
        Ok(bank)
    }

    /// Replaces (or adds) the prior of one family, keeping the others.
    pub fn with_prior(&self, prior: FamilyPrior) -> Result<Self> {
        let mut priors: Vec<FamilyPrior> = self
            .priors
            .iter()
            .filter(|p| p.family != prior.family)
            .cloned()
            .collect();
        priors.push(prior);
        let mut bank = PriorBank::new(priors)?;
        bank.warnings = self.warnings.clone();
        Ok(bank)
    }

    pub fn draw_params<R: Rng + ?Sized>(
        &self,
        family: Family,
        rng: &mut R,
    ) -> Result<FamilyParams> {
        self.get(family)
            .map(|p| p.draw(rng))
            .ok_or(Error::InactiveFamily(family.name()))
    }

    /// Plain-text form: one family per line, `family [lo, hi] ... weight=w`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# family  per-parameter uniform bounds  model weight\n");
        for (prior, w) in self.priors.iter().zip(&self.weights) {
            out.push_str(prior.family.name());
            for iv in &prior.intervals {
                out.push_str(&format!(" {iv}"));
            }
            out.push_str(&format!(" weight={w}\n"));
        }
        out
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut priors = Vec::new();
        let mut weights = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse(format!("prior config line {}: {msg}", lineno + 1));
            let (name, mut rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err("missing bounds"))?;
            let family: Family = name.parse()?;
            let mut bounds = Vec::new();
            let mut weight = None;
            loop {
                rest = rest.trim_start();
                if rest.is_empty() {
                    break;
                }
                if let Some(after) = rest.strip_prefix('[') {
                    let close = after.find(']').ok_or_else(|| err("unclosed `[`"))?;
                    let (lo, hi) = after[..close]
                        .split_once(',')
                        .ok_or_else(|| err("expected `[lo, hi]`"))?;
                    let lo: f64 = lo.trim().parse().map_err(|_| err("bad lower bound"))?;
                    let hi: f64 = hi.trim().parse().map_err(|_| err("bad upper bound"))?;
                    bounds.push((lo, hi));
                    rest = &after[close + 1..];
                } else if let Some(after) = rest.strip_prefix("weight=") {
                    let end = after.find(char::is_whitespace).unwrap_or(after.len());
                    weight = Some(after[..end].parse::<f64>().map_err(|_| err("bad weight"))?);
                    rest = &after[end..];
                } else {
                    return Err(err(&format!("unexpected `{rest}`")));
                }
            }
            priors.push(FamilyPrior::from_bounds(family, &bounds)?);
            weights.push(weight);
        }
        if priors.is_empty() {
            return Err(Error::NoActiveFamilies);
        }
        let weights: Vec<f64> = if weights.iter().all(Option::is_none) {
            vec![1.0; priors.len()]
        } else {
            weights
                .into_iter()
                .map(|w| {
                    w.ok_or_else(|| Error::Parse("give a weight for every family or none".into()))
                })
                .collect::<Result<_>>()?
        };
        PriorBank::with_weights(priors, weights)
    }
}

/// Data-driven default priors for `families`, derived from the reported
/// statistics.
///
/// Positive-support families are dropped (with a warning) when any reported
/// location statistic is not positive. Beta is kept but flagged when the
/// statistics leave the unit interval.
pub fn default_priors(stats: &SummaryStats, families: &[Family]) -> Result<PriorBank> {
    let get = |f| stats.get(f);
    let quartiles = get(Field::Q1).zip(get(Field::Q3));
    let range = get(Field::Min).zip(get(Field::Max));
    let median = get(Field::Median)
        .or(get(Field::Mean))
        .or_else(|| quartiles.map(|(a, b)| 0.5 * (a + b)))
        .or_else(|| range.map(|(a, b)| 0.5 * (a + b)))
        .ok_or_else(|| Error::InvalidStats("default priors need a location statistic".into()))?;
    let locations: Vec<f64> = stats
        .values()
        .filter(|(f, _)| f.is_location())
        .map(|(_, v)| v)
        .collect();
    let all_positive = locations.iter().all(|&v| v > 0.0);
    let in_unit = locations.iter().all(|&v| (0.0..=1.0).contains(&v));

    // Width used when neither range nor quartiles are reported.
    let fallback_spread = get(Field::Sd)
        .filter(|&s| s > 0.0)
        .map(|s| 6.0 * s)
        .unwrap_or_else(|| median.abs().max(1.0));

    let widen = |lo: f64, hi: f64| {
        if hi > lo {
            (lo, hi)
        } else {
            let d = 1e-6 * lo.abs().max(1.0);
            (lo - d, hi + d)
        }
    };
    let positive_upper = |hi: f64| hi.max(2.0 * POSITIVITY_FLOOR);

    let mut priors = Vec::new();
    let mut warnings = Vec::new();
    for &family in families {
        if family.positive_support() && !all_positive {
            warnings.push(PriorWarning {
                family,
                dropped: true,
                reason: "reported statistics include non-positive values".into(),
            });
            log::debug!("{family} dropped: reported statistics include non-positive values");
            continue;
        }
        let bounds: Vec<(f64, f64)> = match family {
            Family::Normal => {
                let loc = quartiles.or(range).unwrap_or((
                    median - 0.5 * fallback_spread,
                    median + 0.5 * fallback_spread,
                ));
                let spread = range
                    .map(|(lo, hi)| hi - lo)
                    .or_else(|| quartiles.map(|(q1, q3)| 2.0 * (q3 - q1)))
                    .unwrap_or(fallback_spread);
                vec![widen(loc.0, loc.1), (0.0, positive_upper(spread))]
            }
            Family::LogNormal => {
                let loc = quartiles
                    .or(range)
                    .map(|(lo, hi)| (lo.ln(), hi.ln()))
                    .unwrap_or((median.ln() - 1.0, median.ln() + 1.0));
                let log_spread = range
                    .or(quartiles)
                    .map(|(lo, hi)| (hi / lo).ln())
                    .unwrap_or(0.0);
                vec![widen(loc.0, loc.1), (0.0, log_spread.max(2.0))]
            }
            Family::Weibull => {
                let scale_hi = get(Field::Max)
                    .map(|m| 2.0 * m)
                    .or_else(|| get(Field::Q3).map(|q3| 4.0 * q3))
                    .unwrap_or(4.0 * median);
                vec![(0.1, 10.0), (0.0, positive_upper(scale_hi))]
            }
            Family::Beta => {
                if !in_unit {
                    warnings.push(PriorWarning {
                        family,
                        dropped: false,
                        reason: "reported statistics fall outside [0, 1]".into(),
                    });
                    log::debug!("{family} flagged: reported statistics fall outside [0, 1]");
                }
                vec![(0.0, 40.0), (0.0, 40.0)]
            }
            Family::Exponential => vec![(0.0, positive_upper(4.0 * median))],
        };
        priors.push(FamilyPrior::from_bounds(family, &bounds)?);
    }
    let mut bank = PriorBank::new(priors)?;
    bank.warnings = warnings;
    Ok(bank)
}
