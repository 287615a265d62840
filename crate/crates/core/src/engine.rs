//! Rejection ABC against one family (ABC-SD) or a bank of families with
//! model averaging (ABC-BMA).
//!
//! Both engines share one iteration kernel: draw parameters from the uniform
//! prior, simulate a pseudo-dataset of the reported size, summarize it, and
//! measure its distance to the reported statistics. Acceptance keeps the
//! best `ceil(N * acceptance_fraction)` draws (or, in fixed-tolerance mode,
//! every draw closer than the tolerance).
//!
//! Iteration `i` uses a random stream derived from `(seed, i)` only, and
//! iterations are evaluated in batches whose boundaries coincide with the
//! model-weight adaptation points. Results are therefore identical for any
//! number of worker threads.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, FamilyParams, PriorBank};
use crate::error::{Error, Result};
use crate::rng::{hashed_uniform, iteration_rng};
use crate::summaries::{
    summary_vector, weighted_distance, DistanceScaling, QuantileRule, Summarizer, SummaryStats,
};

/// Stream domain for the model-selection uniforms, kept apart from the
/// per-iteration simulation streams.
pub const SELECTION_DOMAIN: u64 = 0x5E1E_C7ED;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// Closed-form moments evaluated at the mean of the accepted parameters.
    PlugIn,
    /// Mean of the accepted pseudo-datasets' sample means and SDs.
    #[default]
    Simulation,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plug-in" | "plugin" => Ok(EstimatorMode::PlugIn),
            "simulation" => Ok(EstimatorMode::Simulation),
            other => Err(Error::Parse(format!(
                "unknown estimator `{other}` (expected plug-in or simulation)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub iterations: usize,
    pub acceptance_fraction: f64,
    /// Fixed-tolerance mode: accept every draw with distance below this value.
    pub tolerance: Option<f64>,
    pub adaptation_interval: usize,
    pub weight_floor: f64,
    pub seed: u64,
    pub estimator: EstimatorMode,
    pub quantile_rule: QuantileRule,
    pub scaling: DistanceScaling,
}

pub const DEFAULT_SEED: u64 = 20_151_061;

impl Default for AbcConfig {
    fn default() -> Self {
        AbcConfig {
            iterations: 20_000,
            acceptance_fraction: 0.001,
            tolerance: None,
            adaptation_interval: 1_000,
            weight_floor: 0.01,
            seed: DEFAULT_SEED,
            estimator: EstimatorMode::default(),
            quantile_rule: QuantileRule::default(),
            scaling: DistanceScaling::default(),
        }
    }
}

impl AbcConfig {
    /// Single-family defaults: 20,000 iterations.
    pub fn sd() -> Self {
        AbcConfig::default()
    }

    /// Model-averaging defaults: 50,000 iterations.
    pub fn bma() -> Self {
        AbcConfig {
            iterations: 50_000,
            ..AbcConfig::default()
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_estimator(mut self, estimator: EstimatorMode) -> Self {
        self.estimator = estimator;
        self
    }

    /// Number of draws retained by the acceptance reservoir.
    pub fn capacity(&self) -> usize {
        (self.iterations as f64 * self.acceptance_fraction).ceil() as usize
    }

    pub fn validate(&self, active: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.acceptance_fraction > 0.0 && self.acceptance_fraction < 1.0) {
            return bad(format!(
                "acceptance fraction {} must lie in (0, 1)",
                self.acceptance_fraction
            ));
        }
        if self.capacity() < 1 {
            return bad("iterations x acceptance fraction must retain at least one draw".into());
        }
        if self.adaptation_interval == 0 {
            return bad("adaptation interval must be positive".into());
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0 / active.max(1) as f64) {
            return bad(format!(
                "weight floor {} must lie in (0, 1/K) for K = {active}",
                self.weight_floor
            ));
        }
        if let Some(eps) = self.tolerance {
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("tolerance {eps} must be positive"));
            }
        }
        Ok(())
    }
}

/// One retained simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedDraw {
    pub iteration: u64,
    pub family: Family,
    pub params: FamilyParams,
    pub pseudo_mean: f64,
    pub pseudo_sd: f64,
    pub distance: f64,
}

impl AcceptedDraw {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.iteration.cmp(&other.iteration))
    }
}

struct ByDistance(AcceptedDraw);

impl PartialEq for ByDistance {
    fn eq(&self, other: &Self) -> bool {
        self.0.key_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for ByDistance {}
impl PartialOrd for ByDistance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByDistance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

/// Keeps the `capacity` draws with the smallest distance seen so far.
/// Ties in distance are broken by iteration index.
pub struct Reservoir {
    capacity: usize,
    heap: BinaryHeap<ByDistance>,
    counts: [usize; 5],
}

impl Reservoir {
    pub fn new(capacity: usize) -> Self {
        Reservoir {
            capacity,
            heap: BinaryHeap::with_capacity(capacity + 1),
            counts: [0; 5],
        }
    }

    /// Returns whether the draw was retained.
    pub fn offer(&mut self, draw: AcceptedDraw) -> bool {
        if self.capacity == 0 {
            return false;
        }
        if self.heap.len() < self.capacity {
            self.counts[draw.family.index()] += 1;
            self.heap.push(ByDistance(draw));
            return true;
        }
        let worst = &self.heap.peek().expect("non-empty at capacity").0;
        if draw.key_cmp(worst) == Ordering::Less {
            let evicted = self.heap.pop().expect("non-empty").0;
            self.counts[evicted.family.index()] -= 1;
            self.counts[draw.family.index()] += 1;
            self.heap.push(ByDistance(draw));
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Largest retained distance, i.e. the effective tolerance.
    pub fn worst_distance(&self) -> Option<f64> {
        self.heap.peek().map(|d| d.0.distance)
    }

    pub fn count(&self, family: Family) -> usize {
        self.counts[family.index()]
    }

    /// Retained draws, closest first.
    pub fn into_sorted(self) -> Vec<AcceptedDraw> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|d| d.0)
            .collect()
    }
}

enum Acceptor {
    Best(Reservoir),
    Within {
        tolerance: f64,
        draws: Vec<AcceptedDraw>,
        counts: [usize; 5],
    },
}

impl Acceptor {
    fn offer(&mut self, draw: AcceptedDraw) {
        match self {
            Acceptor::Best(r) => {
                r.offer(draw);
            }
            Acceptor::Within {
                tolerance,
                draws,
                counts,
            } => {
                if draw.distance < *tolerance {
                    counts[draw.family.index()] += 1;
                    draws.push(draw);
                }
            }
        }
    }

    fn counts(&self, families: &[Family]) -> Vec<usize> {
        match self {
            Acceptor::Best(r) => families.iter().map(|&f| r.count(f)).collect(),
            Acceptor::Within { counts, .. } => families.iter().map(|f| counts[f.index()]).collect(),
        }
    }

    fn finish(self) -> (Vec<AcceptedDraw>, f64) {
        match self {
            Acceptor::Best(r) => {
                let eps = r.worst_distance().unwrap_or(f64::NAN);
                (r.into_sorted(), eps)
            }
            Acceptor::Within {
                tolerance,
                mut draws,
                ..
            } => {
                draws.sort_by(AcceptedDraw::key_cmp);
                (draws, tolerance)
            }
        }
    }
}

/// Floors model weights proportional to `counts` at `floor` and renormalizes:
/// families whose share would fall below the floor get exactly the floor and
/// the rest share the remaining mass in proportion to their counts. With no
/// counts at all the weights are uniform.
pub fn floored_weights(counts: &[usize], floor: f64) -> Vec<f64> {
    let k = counts.len();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![1.0 / k as f64; k];
    }
    let mut pinned = vec![false; k];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - floor * n_pinned as f64;
        let free_total: usize = counts
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(c, _)| c)
            .sum();
        let weights: Vec<f64> = counts
            .iter()
            .zip(&pinned)
            .map(|(&c, &p)| {
                if p {
                    floor
                } else {
                    free_mass * c as f64 / free_total as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..k {
            if !pinned[i] && weights[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return weights;
        }
    }
}

/// Model weights from the reservoir composition over the `active` families.
pub fn adapt_model_weights(reservoir: &Reservoir, floor: f64, active: &[Family]) -> Vec<f64> {
    let counts: Vec<usize> = active.iter().map(|&f| reservoir.count(f)).collect();
    floored_weights(&counts, floor)
}

/// Proportion of accepted draws per family (families with draws only).
pub fn posterior_model_probabilities(accepted: &[AcceptedDraw]) -> BTreeMap<Family, f64> {
    let mut probs = BTreeMap::new();
    for d in accepted {
        *probs.entry(d.family).or_insert(0.0) += 1.0;
    }
    let total = accepted.len() as f64;
    for p in probs.values_mut() {
        *p /= total;
    }
    probs
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Iterations whose pseudo-data produced non-finite statistics.
    pub discarded_nonfinite: usize,
    /// How often each family was proposed.
    pub proposals: BTreeMap<Family, usize>,
    /// Model weights in force during the final batch.
    pub final_weights: BTreeMap<Family, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    AbcSd,
    AbcBma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: MethodKind,
    pub mean_hat: f64,
    pub sd_hat: f64,
    /// Probability per active family; zeros included.
    pub model_probs: BTreeMap<Family, f64>,
    /// Accepted draws, closest first.
    pub accepted: Vec<AcceptedDraw>,
    pub effective_tolerance: f64,
    pub config: AbcConfig,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    /// Maps estimates made on data rescaled from `[lo, hi]` back to the
    /// original scale.
    pub fn unscale(mut self, lo: f64, hi: f64) -> Self {
        let w = hi - lo;
        self.mean_hat = lo + w * self.mean_hat;
        self.sd_hat *= w;
        for d in &mut self.accepted {
            d.pseudo_mean = lo + w * d.pseudo_mean;
            d.pseudo_sd *= w;
        }
        self
    }

    pub fn model_prob(&self, family: Family) -> f64 {
        self.model_probs.get(&family).copied().unwrap_or(0.0)
    }
}

/// Everything an iteration needs besides its index.
struct Problem<'a> {
    observed: Vec<f64>,
    weights: Vec<f64>,
    summarizer: Summarizer,
    prior: &'a PriorBank,
    n: usize,
    seed: u64,
}

impl<'a> Problem<'a> {
    fn new(stats: &SummaryStats, prior: &'a PriorBank, cfg: &AbcConfig) -> Self {
        let observed = summary_vector(stats);
        Problem {
            weights: cfg.scaling.weights(&observed),
            observed,
            summarizer: Summarizer::new(stats.scenario(), cfg.quantile_rule),
            prior,
            n: stats.n(),
            seed: cfg.seed,
        }
    }

    fn simulate(&self, family: Family, iteration: u64, buf: &mut Vec<f64>) -> Option<AcceptedDraw> {
        let mut rng = iteration_rng(self.seed, iteration);
        let params = self.prior.get(family)?.draw(&mut rng);
        buf.clear();
        params.sample_into(self.n, &mut rng, buf);
        let summary = self.summarizer.summarize(buf);
        if !summary.is_finite() {
            return None;
        }
        let distance = weighted_distance(&self.observed, summary.vector(), &self.weights);
        if !distance.is_finite() {
            return None;
        }
        Some(AcceptedDraw {
            iteration,
            family,
            params,
            pseudo_mean: summary.mean,
            pseudo_sd: summary.sd,
            distance,
        })
    }
}

/// Runs the simulation kernel for a single iteration, exactly as the engines
/// do. `None` means the pseudo-data had non-finite statistics.
pub fn simulate_draw(
    stats: &SummaryStats,
    prior: &PriorBank,
    family: Family,
    cfg: &AbcConfig,
    iteration: u64,
) -> Result<Option<AcceptedDraw>> {
    prior
        .get(family)
        .ok_or(Error::InactiveFamily(family.name()))?;
    let problem = Problem::new(stats, prior, cfg);
    Ok(problem.simulate(family, iteration, &mut Vec::with_capacity(stats.n())))
}

fn choose(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn run(
    method: MethodKind,
    families: &[Family],
    initial_weights: Vec<f64>,
    stats: &SummaryStats,
    prior: &PriorBank,
    cfg: &AbcConfig,
) -> Result<EstimateResult> {
    cfg.validate(families.len())?;
    let problem = Problem::new(stats, prior, cfg);
    let mut acceptor = match cfg.tolerance {
        None => Acceptor::Best(Reservoir::new(cfg.capacity())),
        Some(tolerance) => Acceptor::Within {
            tolerance,
            draws: Vec::new(),
            counts: [0; 5],
        },
    };
    let mut weights = initial_weights;
    let mut diagnostics = Diagnostics {
        iterations: cfg.iterations,
        ..Default::default()
    };
    let adaptive = method == MethodKind::AbcBma && families.len() > 1;

    let mut start = 0;
    while start < cfg.iterations {
        let end = (start + cfg.adaptation_interval).min(cfg.iterations);
        let batch: Vec<(Family, Option<AcceptedDraw>)> = (start as u64..end as u64)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(problem.n),
                |buf, i| {
                    let family = if families.len() == 1 {
                        families[0]
                    } else {
                        families[choose(&weights, hashed_uniform(cfg.seed, SELECTION_DOMAIN, i))]
                    };
                    (family, problem.simulate(family, i, buf))
                },
            )
            .collect();
        for (family, outcome) in batch {
            *diagnostics.proposals.entry(family).or_insert(0) += 1;
            match outcome {
                Some(draw) => acceptor.offer(draw),
                None => diagnostics.discarded_nonfinite += 1,
            }
        }
        start = end;
        if adaptive && start < cfg.iterations {
            let counts = acceptor.counts(families);
            if counts.iter().any(|&c| c > 0) {
                weights = floored_weights(&counts, cfg.weight_floor);
            }
        }
    }
    if diagnostics.discarded_nonfinite > 0 {
        log::debug!(
            "{} of {} iterations discarded for non-finite pseudo statistics",
            diagnostics.discarded_nonfinite,
            cfg.iterations
        );
    }
    diagnostics.final_weights = families
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();

    let (accepted, effective_tolerance) = acceptor.finish();
    if accepted.is_empty() {
        return Err(Error::NoAcceptedDraws(effective_tolerance));
    }
    let mut model_probs: BTreeMap<Family, f64> = families.iter().map(|&f| (f, 0.0)).collect();
    model_probs.extend(posterior_model_probabilities(&accepted));

    let m = accepted.len() as f64;
    let (mean_hat, sd_hat) = match (method, cfg.estimator) {
        (MethodKind::AbcSd, EstimatorMode::PlugIn) => {
            let family = families[0];
            let mut avg = [0.0; 2];
            for d in &accepted {
                for (a, v) in avg.iter_mut().zip(d.params.params()) {
                    *a += v / m;
                }
            }
            FamilyParams::new(family, &avg[..family.arity()])?.analytic_moments()
        }
        _ => (
            accepted.iter().map(|d| d.pseudo_mean).sum::<f64>() / m,
            accepted.iter().map(|d| d.pseudo_sd).sum::<f64>() / m,
        ),
    };

    Ok(EstimateResult {
        method,
        mean_hat,
        sd_hat,
        model_probs,
        accepted,
        effective_tolerance,
        config: cfg.clone(),
        diagnostics,
    })
}

/// ABC against a single assumed family.
pub fn run_abc_sd(
    family: Family,
    stats: &SummaryStats,
    prior: &PriorBank,
    cfg: &AbcConfig,
) -> Result<EstimateResult> {
    prior
        .get(family)
        .ok_or(Error::InactiveFamily(family.name()))?;
    run(MethodKind::AbcSd, &[family], vec![1.0], stats, prior, cfg)
}

/// ABC with model averaging over `families`. Families missing from the prior
/// bank (e.g. dropped by support checks) are skipped. A single remaining
/// family degenerates to [`run_abc_sd`] with the simulation estimator.
pub fn run_abc_bma(
    families: &[Family],
    stats: &SummaryStats,
    prior: &PriorBank,
    cfg: &AbcConfig,
) -> Result<EstimateResult> {
    let mut active: Vec<Family> = families
        .iter()
        .copied()
        .filter(|&f| prior.get(f).is_some())
        .collect();
    active.sort();
    active.dedup();
    if active.is_empty() {
        return Err(Error::NoActiveFamilies);
    }
    let weights = if active == prior.families() {
        prior.weights().to_vec()
    } else {
        vec![1.0 / active.len() as f64; active.len()]
    };
    run(MethodKind::AbcBma, &active, weights, stats, prior, cfg)
}

/// Flat, CSV-friendly view of a result.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateRecord {
    pub method: String,
    pub mean_hat: f64,
    pub sd_hat: f64,
    pub effective_tolerance: f64,
    pub accepted: usize,
    pub iterations: usize,
    pub discarded_nonfinite: usize,
    pub seed: u64,
    pub p_normal: f64,
    pub p_lognormal: f64,
    pub p_weibull: f64,
    pub p_beta: f64,
    pub p_exponential: f64,
}

/// One accepted draw as a CSV row.
#[derive(Clone, Debug, Serialize)]
pub struct DrawRecord {
    pub rank: usize,
    pub iteration: u64,
    pub family: Family,
    pub param1: f64,
    pub param2: Option<f64>,
    pub pseudo_mean: f64,
    pub pseudo_sd: f64,
    pub distance: f64,
}

impl EstimateResult {
    pub fn record(&self, method: &str) -> EstimateRecord {
        EstimateRecord {
            method: method.to_string(),
            mean_hat: self.mean_hat,
            sd_hat: self.sd_hat,
            effective_tolerance: self.effective_tolerance,
            accepted: self.accepted.len(),
            iterations: self.diagnostics.iterations,
            discarded_nonfinite: self.diagnostics.discarded_nonfinite,
            seed: self.config.seed,
            p_normal: self.model_prob(Family::Normal),
            p_lognormal: self.model_prob(Family::LogNormal),
            p_weibull: self.model_prob(Family::Weibull),
            p_beta: self.model_prob(Family::Beta),
            p_exponential: self.model_prob(Family::Exponential),
        }
    }

    pub fn draw_records(&self) -> Vec<DrawRecord> {
        self.accepted
            .iter()
            .enumerate()
            .map(|(rank, d)| DrawRecord {
                rank: rank + 1,
                iteration: d.iteration,
                family: d.family,
                param1: d.params.params()[0],
                param2: d.params.params().get(1).copied(),
                pseudo_mean: d.pseudo_mean,
                pseudo_sd: d.pseudo_sd,
                distance: d.distance,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{default_priors, FamilyPrior};
    use crate::summaries::{Field, SummaryScenario};

    fn draw(family: Family, distance: f64, iteration: u64) -> AcceptedDraw {
        AcceptedDraw {
            iteration,
            family,
            params: FamilyParams::exponential(1.0).unwrap(),
            pseudo_mean: 0.0,
            pseudo_sd: 0.0,
            distance,
        }
    }

    fn los_stats() -> SummaryStats {
        SummaryStats::new(
            SummaryScenario::S3,
            111,
            [(Field::Q1, 1.2), (Field::Median, 2.1), (Field::Q3, 4.6)],
        )
        .unwrap()
    }

    #[test]
    fn floor_arithmetic() {
        assert_eq!(floored_weights(&[10, 0], 0.01), vec![0.99, 0.01]);
        let equal = floored_weights(&[7; 5], 0.01);
        assert!(equal.iter().all(|w| (w - 0.2).abs() < 1e-15));
        // zero-count families pinned at the floor, the other two share 0.97 as 3:2
        let w = floored_weights(&[30, 20, 0, 0, 0], 0.01);
        let expected = [0.97 * 0.6, 0.97 * 0.4, 0.01, 0.01, 0.01];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{w:?}");
        }
        assert_eq!(floored_weights(&[0, 0], 0.01), vec![0.5, 0.5]);
    }

    #[test]
    fn small_shares_lifted_to_floor() {
        // 1 of 1000 would be 0.001 < floor
        let w = floored_weights(&[999, 1, 0], 0.05);
        assert!((w[1] - 0.05).abs() < 1e-15 && (w[2] - 0.05).abs() < 1e-15);
        assert!((w[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adapt_from_reservoir() {
        let mut r = Reservoir::new(100);
        for i in 0..100 {
            r.offer(draw(Family::Normal, i as f64, i));
        }
        let pi = adapt_model_weights(&r, 0.01, &[Family::Normal, Family::Beta]);
        assert_eq!(pi, vec![0.99, 0.01]);
    }

    #[test]
    fn model_probability_counting() {
        let mut draws: Vec<AcceptedDraw> = (0..28).map(|i| draw(Family::Beta, 0.0, i)).collect();
        draws.extend((28..50).map(|i| draw(Family::Normal, 0.0, i)));
        let p = posterior_model_probabilities(&draws);
        assert!((p[&Family::Beta] - 0.56).abs() < 1e-15);
        assert!((p[&Family::Normal] - 0.44).abs() < 1e-15);

        let single: Vec<AcceptedDraw> = (0..5).map(|i| draw(Family::Weibull, 0.0, i)).collect();
        assert_eq!(
            posterior_model_probabilities(&single),
            BTreeMap::from([(Family::Weibull, 1.0)])
        );
    }

    #[test]
    fn reservoir_keeps_smallest() {
        let mut r = Reservoir::new(3);
        for (i, d) in [5.0, 1.0, 4.0, 2.0, 3.0, 0.5].into_iter().enumerate() {
            r.offer(draw(Family::Normal, d, i as u64));
        }
        assert_eq!(r.len(), 3);
        assert_eq!(r.worst_distance(), Some(2.0));
        let kept: Vec<f64> = r.into_sorted().iter().map(|d| d.distance).collect();
        assert_eq!(kept, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn reservoir_ties_prefer_earlier_iterations() {
        let mut r = Reservoir::new(2);
        for i in 0..5 {
            r.offer(draw(Family::Normal, 1.0, i));
        }
        let iters: Vec<u64> = r.into_sorted().iter().map(|d| d.iteration).collect();
        assert_eq!(iters, vec![0, 1]);
    }

    #[test]
    fn config_validation() {
        assert!(AbcConfig::sd().validate(1).is_ok());
        assert!(AbcConfig::bma().validate(5).is_ok());
        assert!(AbcConfig {
            weight_floor: 0.25,
            ..AbcConfig::bma()
        }
        .validate(5)
        .is_err());
        assert!(AbcConfig {
            acceptance_fraction: 1.0,
            ..AbcConfig::sd()
        }
        .validate(1)
        .is_err());
        assert!(AbcConfig {
            acceptance_fraction: 0.0,
            ..AbcConfig::sd()
        }
        .validate(1)
        .is_err());
        assert!(AbcConfig {
            iterations: 0,
            ..AbcConfig::sd()
        }
        .validate(1)
        .is_err());
        assert!(AbcConfig {
            tolerance: Some(-1.0),
            ..AbcConfig::sd()
        }
        .validate(1)
        .is_err());
        assert_eq!(AbcConfig::bma().capacity(), 50);
        assert_eq!(AbcConfig::sd().with_iterations(100_000).capacity(), 100);
        assert_eq!(AbcConfig::sd().with_iterations(10).capacity(), 1);
    }

    #[test]
    fn sd_result_shape() {
        let stats = los_stats();
        let prior = default_priors(&stats, &[Family::Normal]).unwrap();
        let cfg = AbcConfig::sd().with_iterations(5_000);
        let r = run_abc_sd(Family::Normal, &stats, &prior, &cfg).unwrap();
        assert_eq!(r.accepted.len(), 5);
        assert_eq!(r.model_probs, BTreeMap::from([(Family::Normal, 1.0)]));
        assert!(r.sd_hat >= 0.0);
        let lo = r
            .accepted
            .iter()
            .map(|d| d.pseudo_mean)
            .fold(f64::INFINITY, f64::min);
        let hi = r
            .accepted
            .iter()
            .map(|d| d.pseudo_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= r.mean_hat && r.mean_hat <= hi);
        assert_eq!(r.effective_tolerance, r.accepted.last().unwrap().distance);
    }

    #[test]
    fn inactive_family_rejected() {
        let stats = los_stats();
        let prior = default_priors(&stats, &[Family::Normal]).unwrap();
        assert_eq!(
            run_abc_sd(Family::Beta, &stats, &prior, &AbcConfig::sd()).unwrap_err(),
            Error::InactiveFamily("beta")
        );
        assert_eq!(
            run_abc_bma(&[Family::Beta], &stats, &prior, &AbcConfig::bma()).unwrap_err(),
            Error::NoActiveFamilies
        );
    }

    #[test]
    fn fixed_tolerance_mode() {
        let stats = los_stats();
        let prior = default_priors(&stats, &[Family::Normal]).unwrap();
        let cfg = AbcConfig {
            tolerance: Some(0.5),
            ..AbcConfig::sd().with_iterations(5_000)
        };
        let r = run_abc_sd(Family::Normal, &stats, &prior, &cfg).unwrap();
        assert!(!r.accepted.is_empty());
        assert!(r.accepted.iter().all(|d| d.distance < 0.5));
        let tiny = AbcConfig {
            tolerance: Some(1e-9),
            ..cfg
        };
        assert!(matches!(
            run_abc_sd(Family::Normal, &stats, &prior, &tiny),
            Err(Error::NoAcceptedDraws(_))
        ));
    }

    #[test]
    fn bma_probabilities_cover_active_families() {
        let stats = los_stats();
        let prior = default_priors(&stats, &Family::ALL).unwrap();
        let r = run_abc_bma(
            &Family::ALL,
            &stats,
            &prior,
            &AbcConfig::bma().with_iterations(5_000),
        )
        .unwrap();
        assert_eq!(r.model_probs.len(), 5);
        assert!((r.model_probs.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(r.model_prob(Family::Beta), 0.0);
        let total: usize = r.diagnostics.proposals.values().sum();
        assert_eq!(total, 5_000);
        let w: f64 = r.diagnostics.final_weights.values().sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plug_in_estimator_uses_mean_parameters() {
        let stats = los_stats();
        let prior = PriorBank::new(vec![FamilyPrior::from_bounds(
            Family::Normal,
            &[(1.2, 4.6), (0.0, 6.8)],
        )
        .unwrap()])
        .unwrap();
        let cfg = AbcConfig::sd()
            .with_iterations(5_000)
            .with_estimator(EstimatorMode::PlugIn);
        let r = run_abc_sd(Family::Normal, &stats, &prior, &cfg).unwrap();
        let m = r.accepted.len() as f64;
        let mu = r.accepted.iter().map(|d| d.params.params()[0]).sum::<f64>() / m;
        let sigma = r.accepted.iter().map(|d| d.params.params()[1]).sum::<f64>() / m;
        assert!((r.mean_hat - mu).abs() < 1e-12);
        assert!((r.sd_hat - sigma).abs() < 1e-12);
    }

    #[test]
    fn unscale_maps_back() {
        let stats = SummaryStats::from_record("n=60 median=1 mean=0.95 min=0.917 max=1").unwrap();
        let prior = default_priors(&stats, &[Family::Beta]).unwrap();
        let r = run_abc_sd(
            Family::Beta,
            &stats,
            &prior,
            &AbcConfig::sd().with_iterations(2_000),
        )
        .unwrap();
        let (m, s) = (r.mean_hat, r.sd_hat);
        let back = r.unscale(0.0, 100.0);
        assert!((back.mean_hat - 100.0 * m).abs() < 1e-9);
        assert!((back.sd_hat - 100.0 * s).abs() < 1e-9);
    }
}
