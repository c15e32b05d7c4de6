//! Grid CDF estimates composed from a representative family, and the
//! top-level learners built on them.

use serde::{Deserialize, Serialize};

use crate::distributions::{BitFeedbackOracle, ExactOracle};
use crate::error::{Error, Result};
use crate::geometry::{project_down, GridEndpoint, GridSpec, Hyperrectangle};
use crate::partition::ProbabilityEstimator;
use crate::rhi::{rhi, RepFamily, RhiConfig};

/// Splits `A × [0, x]` into blocks `A × I` with `I` in the level family of `A`.
///
/// `x` must be a right endpoint of the base partition of `A`. For `x = 0` the
/// prefix is `A × {0}`, which is the single base block `{0}`.
pub fn clp(family: &RepFamily, a: &Hyperrectangle, x: GridEndpoint) -> Result<Vec<Hyperrectangle>> {
    let levels = family
        .family(a)
        .ok_or_else(|| Error::CorruptFamily(format!("{a} has no level family")))?;
    let k = levels.base().prefix_index(x).ok_or_else(|| {
        Error::ContractViolation(format!("{x} is not an extreme of the partition above {a}"))
    })?;
    levels
        .prefix_decompose(k)?
        .into_iter()
        .map(|id| {
            levels
                .block(id)
                .map(|b| a.extend(b.interval))
                .ok_or_else(|| Error::CorruptFamily(format!("block {id:?} missing above {a}")))
        })
        .collect()
}

/// Unclamped recursive estimate of `P(X <= x)` for a grid point `x`.
pub fn cge_raw(family: &RepFamily, x: &[GridEndpoint]) -> Result<f64> {
    let grid = family.grid();
    if x.len() != grid.dim() {
        return Err(Error::ContractViolation(format!(
            "point has {} coordinates, grid has {}",
            x.len(),
            grid.dim()
        )));
    }
    if let Some(bad) = x.iter().find(|&&e| e > grid.top()) {
        return Err(Error::ContractViolation(format!(
            "coordinate {bad} is off the grid"
        )));
    }
    cge_rec(family, &Hyperrectangle::unit(), x)
}

fn cge_rec(family: &RepFamily, a: &Hyperrectangle, x: &[GridEndpoint]) -> Result<f64> {
    let j = a.dim();
    let levels = family
        .family(a)
        .ok_or_else(|| Error::CorruptFamily(format!("{a} has no level family")))?;
    let projected = project_down(x[j], &levels.base().extremes());
    if j + 1 == x.len() {
        return family
            .estimates()
            .get(a, projected)
            .ok_or_else(|| Error::CorruptFamily(format!("no estimate for ({a}, {projected})")));
    }
    clp(family, a, projected)?
        .iter()
        .map(|b| cge_rec(family, b, x))
        .sum()
}

/// `cge_raw` clamped into `[0, 1]`.
pub fn cge(family: &RepFamily, x: &[GridEndpoint]) -> Result<f64> {
    cge_raw(family, x).map(|v| v.clamp(0.0, 1.0))
}

/// Grid CDF estimate backed by a representative family.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfEstimator {
    family: RepFamily,
    clamp: bool,
}

impl CdfEstimator {
    pub fn new(family: RepFamily) -> Self {
        Self {
            family,
            clamp: true,
        }
    }

    pub fn unclamped(family: RepFamily) -> Self {
        Self {
            family,
            clamp: false,
        }
    }

    pub fn family(&self) -> &RepFamily {
        &self.family
    }

    pub fn into_family(self) -> RepFamily {
        self.family
    }

    pub fn grid(&self) -> &GridSpec {
        self.family.grid()
    }

    pub fn queries(&self) -> u64 {
        self.family.total_queries()
    }

    pub fn evaluate(&self, x: &[GridEndpoint]) -> Result<f64> {
        if self.clamp {
            cge(&self.family, x)
        } else {
            cge_raw(&self.family, x)
        }
    }
}

/// Extends a grid estimator to `[0,1]^n` by rounding every coordinate up to the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FullDomainEstimator {
    inner: CdfEstimator,
}

impl FullDomainEstimator {
    pub fn new(inner: CdfEstimator) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &CdfEstimator {
        &self.inner
    }

    pub fn grid(&self) -> &GridSpec {
        self.inner.grid()
    }

    pub fn queries(&self) -> u64 {
        self.inner.queries()
    }

    /// Component-wise smallest grid point `>= x`.
    pub fn round_up(&self, x: &[f64]) -> Vec<GridEndpoint> {
        x.iter().map(|&xi| self.grid().round_up(xi)).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.grid().dim() {
            return Err(Error::ContractViolation(format!(
                "point has {} coordinates, grid has {}",
                x.len(),
                self.grid().dim()
            )));
        }
        if let Some(bad) = x.iter().find(|xi| !(0.0..=1.0).contains(*xi)) {
            return Err(Error::ContractViolation(format!(
                "coordinate {bad} is outside [0,1]"
            )));
        }
        self.inner.evaluate(&self.round_up(x))
    }
}

/// How the internal accuracy `eps'` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LearnMode {
    /// `eps' = eps / M` with the worst-case constant `M`, confidence slack on.
    Theoretical,
    /// Caller-supplied `eps'`, no confidence slack in the stop rule.
    Practical { eps_prime: f64 },
}

/// `M = 2^{n+3} sqrt(n ln(4K/delta)) (log2 K)^n`.
pub fn theoretical_accuracy_divisor(grid: &GridSpec, delta: f64) -> f64 {
    let n = grid.dim() as i32;
    let k = f64::from(grid.resolution());
    let log_k = f64::from(grid.log2_resolution());
    2f64.powi(n + 3) * (f64::from(n) * (4.0 * k / delta).ln()).sqrt() * log_k.powi(n)
}

/// Internal accuracy and family configuration implied by `mode`.
pub fn rhi_config(eps: f64, delta: f64, grid: GridSpec, mode: LearnMode) -> Result<RhiConfig> {
    check_unit_open("eps", eps)?;
    check_unit_open("delta", delta)?;
    Ok(match mode {
        LearnMode::Theoretical => RhiConfig::new(
            eps / theoretical_accuracy_divisor(&grid, delta),
            delta,
            grid,
        ),
        LearnMode::Practical { eps_prime } => {
            check_unit_open("eps'", eps_prime)?;
            RhiConfig::new(eps_prime, delta, grid).without_margin()
        }
    })
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must lie in (0,1)"
        )))
    }
}

/// Learns `P(X <= x)` on the grid from one-bit feedback.
pub fn learn_cdf_grid(
    oracle: BitFeedbackOracle,
    eps: f64,
    delta: f64,
    grid: GridSpec,
    mode: LearnMode,
) -> Result<CdfEstimator> {
    let config = rhi_config(eps, delta, grid, mode)?;
    let mut est = ProbabilityEstimator::monte_carlo(oracle);
    Ok(CdfEstimator::new(rhi(&mut est, &config)?))
}

/// Same pipeline with every raw estimate replaced by its exact value.
pub fn learn_cdf_grid_exact(
    oracle: ExactOracle,
    eps_prime: f64,
    grid: GridSpec,
) -> Result<CdfEstimator> {
    let mut est = ProbabilityEstimator::exact(oracle);
    Ok(CdfEstimator::new(rhi(
        &mut est,
        &RhiConfig::new(eps_prime, 0.5, grid),
    )?))
}

/// Resolution `ceil(1 / (2 eps sigma))` used for densities bounded by `sigma`.
pub fn density_grid(n: usize, eps: f64, sigma: f64) -> Result<GridSpec> {
    check_unit_open("eps", eps)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "density bound {sigma} must be positive"
        )));
    }
    GridSpec::from_real_resolution(n, 1.0 / (2.0 * eps * sigma))
}

/// Learns the CDF on all of `[0,1]^n` for a distribution with density at most `sigma`.
///
/// `sigma` defaults to the bound declared by the distribution.
pub fn learn_cdf_density(
    oracle: BitFeedbackOracle,
    eps: f64,
    delta: f64,
    sigma: Option<f64>,
    mode: LearnMode,
) -> Result<FullDomainEstimator> {
    let spec = oracle.spec();
    if spec.has_atoms() {
        return Err(Error::Precondition(
            "the distribution has atoms and so no bounded density".into(),
        ));
    }
    let sigma = sigma.or(spec.density_bound).ok_or_else(|| {
        Error::Precondition("no density bound declared for the distribution".into())
    })?;
    let grid = density_grid(spec.n, eps, sigma)?;
    let inner = learn_cdf_grid(oracle, eps / 2.0, delta, grid, mode)?;
    Ok(FullDomainEstimator::new(inner))
}

/// One row of a grid sweep against the exact CDF.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    pub estimate: f64,
    pub exact: f64,
    pub abs_error: f64,
}

/// Evaluates `estimate` at every grid point alongside the exact CDF.
pub fn grid_sweep(
    grid: &GridSpec,
    exact: &ExactOracle,
    mut estimate: impl FnMut(&[GridEndpoint]) -> Result<f64>,
) -> Result<Vec<SweepRow>> {
    grid.points()
        .map(|p| {
            let point = grid.to_real(&p);
            let value = estimate(&p)?;
            let truth = exact.cdf(&point);
            Ok(SweepRow {
                point,
                estimate: value,
                exact: truth,
                abs_error: (value - truth).abs(),
            })
        })
        .collect()
}

pub fn sup_error(rows: &[SweepRow]) -> f64 {
    rows.iter().map(|r| r.abs_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::geometry::{Interval, IntervalKind, RealInterval};

    fn e(n: u32) -> GridEndpoint {
        GridEndpoint(n)
    }

    fn exact_estimator(spec: DistributionSpec, eps: f64, k: u32) -> CdfEstimator {
        let grid = GridSpec::new(spec.n, k).unwrap();
        learn_cdf_grid_exact(ExactOracle::new(spec), eps, grid).unwrap()
    }

    fn recursion_bound(eps: f64, grid: &GridSpec) -> f64 {
        let log_k = f64::from(grid.log2_resolution());
        eps * (0..grid.dim()).map(|k| log_k.powi(k as i32)).sum::<f64>()
    }

    #[test]
    fn divisor_for_two_dimensions() {
        let m = theoretical_accuracy_divisor(&GridSpec::new(2, 8).unwrap(), 0.1);
        let oracle = 32.0 * 9.0 * (2.0 * 320f64.ln()).sqrt();
        assert!((m - oracle).abs() < 1e-9);
        assert!((m - 978.1).abs() < 0.2, "{m}");
    }

    #[test]
    fn density_grid_sizes() {
        assert_eq!(density_grid(1, 0.25, 1.0).unwrap().resolution(), 2);
        assert_eq!(density_grid(1, 1.0 / 16.0, 4.0).unwrap().resolution(), 2);
        assert_eq!(density_grid(1, 1.0 / 64.0, 4.0).unwrap().resolution(), 8);
        assert_eq!(density_grid(2, 0.01, 1.0).unwrap().resolution(), 64);
    }

    #[test]
    fn clp_covers_prefix_exactly() {
        let spec = DistributionSpec::boxes(
            2,
            vec![
                (0.6, vec![0.0, 0.0], vec![0.5, 0.5]),
                (0.4, vec![0.25, 0.5], vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        let est = exact_estimator(spec.clone(), 0.05, 16);
        let fam = est.family();
        let oracle = ExactOracle::new(spec);
        let grid = *fam.grid();
        for j in 0..2 {
            for a in fam.layer(j) {
                let base = fam.family(a).unwrap().base();
                let m = base.len();
                for x in base.extremes() {
                    let blocks = clp(fam, a, x).unwrap();
                    assert!(blocks.len() <= (usize::BITS - 1 - m.leading_zeros()) as usize + 1);
                    let total: f64 = blocks
                        .iter()
                        .map(|b| oracle.box_probability(b, &grid).unwrap())
                        .sum();
                    let mut prefix = a.to_real(&grid);
                    prefix.push(RealInterval::prefix(grid.value(x)));
                    let want = oracle.real_box_probability(&prefix).unwrap();
                    assert!((total - want).abs() < 1e-12);
                    // Consecutive blocks abut.
                    let last: Vec<Interval> = blocks.iter().map(|b| b.intervals()[j]).collect();
                    for w in last.windows(2) {
                        assert_eq!(w[0].hi(), w[1].lo());
                        assert_eq!(w[1].kind(), IntervalKind::HalfOpen);
                    }
                    if let Some(first) = last.first() {
                        assert!(first.contains_zero());
                        assert_eq!(last.last().unwrap().hi(), x);
                    }
                }
            }
        }
    }

    #[test]
    fn clp_rejects_non_extremes() {
        let est = exact_estimator(
            DistributionSpec::atoms(1, vec![(1.0, vec![0.0])]).unwrap(),
            0.5,
            8,
        );
        let err = clp(est.family(), &Hyperrectangle::unit(), e(3)).unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
        let zero = clp(est.family(), &Hyperrectangle::unit(), e(0)).unwrap();
        assert_eq!(
            zero,
            vec![Hyperrectangle::unit().extend(Interval::degenerate_zero())]
        );
    }

    #[test]
    fn full_point_is_one_under_exact_injection() {
        for n in 1..=3 {
            let est = exact_estimator(DistributionSpec::uniform(n), 0.05, 8);
            let top = vec![e(8); n];
            assert_eq!(est.evaluate(&top).unwrap(), 1.0);
            assert_eq!(est.evaluate(&vec![e(0); n]).unwrap(), 0.0);
        }
    }

    #[test]
    fn uniform_two_dimensional_sweep_within_bound() {
        let est = exact_estimator(DistributionSpec::uniform(2), 0.02, 16);
        let rows = grid_sweep(
            est.grid(),
            &ExactOracle::new(DistributionSpec::uniform(2)),
            |p| est.evaluate(p),
        )
        .unwrap();
        assert_eq!(rows.len(), 289);
        assert!(sup_error(&rows) <= 0.10 + 1e-9, "{}", sup_error(&rows));
        assert!((recursion_bound(0.02, est.grid()) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn exact_recursion_error_within_bound() {
        let specs = |n: usize| {
            vec![
                DistributionSpec::uniform(n),
                DistributionSpec::boxes(n, vec![(1.0, vec![0.2; n], vec![0.45; n])]).unwrap(),
                DistributionSpec::boxes(
                    n,
                    vec![
                        (0.3, vec![0.0; n], vec![0.5; n]),
                        (0.7, vec![0.4; n], vec![0.9; n]),
                    ],
                )
                .unwrap(),
            ]
        };
        for n in 1..=3 {
            for k in [8, 16] {
                for eps in [0.02, 0.05] {
                    for spec in specs(n) {
                        let est = exact_estimator(spec.clone(), eps, k);
                        let rows =
                            grid_sweep(est.grid(), &ExactOracle::new(spec), |p| est.evaluate(p))
                                .unwrap();
                        let bound = recursion_bound(eps, est.grid());
                        assert!(
                            sup_error(&rows) <= bound + 1e-9,
                            "n={n} K={k} eps={eps}: {}",
                            sup_error(&rows)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn unclamped_stays_in_range_without_noise() {
        let spec =
            DistributionSpec::boxes(3, vec![(1.0, vec![0.1, 0.2, 0.3], vec![0.9, 0.7, 0.6])])
                .unwrap();
        let fam = exact_estimator(spec, 0.05, 8).into_family();
        let raw = CdfEstimator::unclamped(fam);
        for p in raw.grid().points() {
            let v = raw.evaluate(&p).unwrap();
            assert!((-1e-9..=1.0 + 1e-9).contains(&v), "{v}");
        }
    }

    #[test]
    fn missing_estimate_is_corruption() {
        let est = exact_estimator(DistributionSpec::uniform(1), 0.2, 8);
        let mut dump = est.family().to_dump();
        dump.nodes[0].estimates.retain(|entry| entry.w != e(8));
        assert!(RepFamily::from_dump(&dump).is_err());
    }

    #[test]
    fn rejects_points_off_the_grid() {
        let est = exact_estimator(DistributionSpec::uniform(2), 0.2, 4);
        assert!(est.evaluate(&[e(5), e(0)]).is_err());
        assert!(est.evaluate(&[e(1)]).is_err());
    }

    #[test]
    fn theoretical_mode_small_instance() {
        let grid = GridSpec::new(1, 4).unwrap();
        let oracle = BitFeedbackOracle::new(DistributionSpec::uniform(1), 3);
        let config = rhi_config(0.9, 0.1, grid, LearnMode::Theoretical).unwrap();
        let est = learn_cdf_grid(oracle, 0.9, 0.1, grid, LearnMode::Theoretical).unwrap();
        let eps = config.eps_prime;
        assert!((est.queries() as f64) <= 8f64.powi(3) / eps.powi(3));
        assert_eq!(
            est.queries(),
            est.family().estimates().len() as u64 * est.family().samples_per_estimate()
        );
    }

    #[test]
    fn practical_one_dimensional_learning() {
        let spec = DistributionSpec::uniform(1);
        let grid = GridSpec::new(1, 64).unwrap();
        let exact = ExactOracle::new(spec.clone());
        let mut good = 0;
        for seed in 0..10 {
            let oracle = BitFeedbackOracle::new(spec.clone(), seed);
            let est = learn_cdf_grid(
                oracle,
                0.1,
                0.1,
                grid,
                LearnMode::Practical { eps_prime: 0.05 },
            )
            .unwrap();
            let rows = grid_sweep(&grid, &exact, |p| est.evaluate(p)).unwrap();
            good += usize::from(sup_error(&rows) <= 0.15);
        }
        assert!(good >= 9, "{good}/10");
    }

    #[test]
    fn density_learner_rounds_up() {
        let spec = DistributionSpec::uniform(2);
        let oracle = BitFeedbackOracle::new(spec, 9);
        let est = learn_cdf_density(
            oracle,
            0.125,
            0.1,
            None,
            LearnMode::Practical { eps_prime: 0.1 },
        )
        .unwrap();
        assert_eq!(est.grid().resolution(), 4);
        let x = [0.3, 0.6];
        let on_grid = est.inner().evaluate(&[e(2), e(3)]).unwrap();
        assert_eq!(est.evaluate(&x).unwrap(), on_grid);
        assert!(est.evaluate(&[1.2, 0.0]).is_err());
    }

    #[test]
    fn density_learner_rejects_atoms() {
        let spec = DistributionSpec::atoms(1, vec![(1.0, vec![0.5])]).unwrap();
        let oracle = BitFeedbackOracle::new(spec, 1);
        let err =
            learn_cdf_density(oracle, 0.1, 0.1, Some(1.0), LearnMode::Theoretical).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
