//! Fixed-price mechanisms for markets with several sellers and buyers.
//!
//! A price vector `p` trades iff every buyer values the item at least at its
//! price and every seller at most at its price. Mirroring the buyer
//! coordinates turns `E[Trade(V, p)]` into a CDF value, so the grid CDF
//! learner doubles as a trade-probability learner.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::distributions::{rng_stream, streams, BitFeedbackOracle, DistributionSpec, ExactOracle};
use crate::error::{Error, Result};
use crate::estimate::{rhi_config, CdfEstimator, LearnMode};
use crate::geometry::{GridEndpoint, GridSpec};
use crate::partition::ProbabilityEstimator;
use crate::rhi::rhi;

/// Resolution of the benchmark grid used for regret.
pub const BENCHMARK_RESOLUTION: u32 = 256;

/// Default multiplier of `T^{-1/4}` for the practical explore-then-commit accuracy.
pub const DEFAULT_ETC_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seller,
    Buyer,
}

/// `1` iff `V_i >= p_i` for every buyer and `V_i <= p_i` for every seller.
pub fn trade(valuations: &[f64], prices: &[f64], roles: &[Role]) -> bool {
    roles
        .iter()
        .zip(valuations)
        .zip(prices)
        .all(|((role, &v), &p)| match role {
            Role::Seller => v <= p,
            Role::Buyer => v >= p,
        })
}

/// Maps prices (or valuations) to CDF coordinates: identity for sellers, `1 - p` for buyers.
///
/// The map is an involution, so it also converts CDF coordinates back to prices.
pub fn to_cdf_coordinates(prices: &[f64], roles: &[Role]) -> Vec<f64> {
    prices
        .iter()
        .zip(roles)
        .map(|(&p, role)| match role {
            Role::Seller => p,
            Role::Buyer => 1.0 - p,
        })
        .collect()
}

/// Same conversion on grid numerators, exact in integer arithmetic.
pub fn to_cdf_grid(prices: &[GridEndpoint], roles: &[Role], grid: &GridSpec) -> Vec<GridEndpoint> {
    prices
        .iter()
        .zip(roles)
        .map(|(&p, role)| match role {
            Role::Seller => p,
            Role::Buyer => GridEndpoint(grid.top().0 - p.0),
        })
        .collect()
}

/// Objective `f(p)` paid when trade happens at prices `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Buyer payments minus seller receipts; 1-Lipschitz in the l1 norm.
    Revenue,
    /// Values on the grid of the given resolution, in lexicographic point order.
    Custom {
        resolution: u32,
        lipschitz: f64,
        values: Vec<f64>,
    },
}

impl Objective {
    pub fn lipschitz(&self) -> f64 {
        match self {
            Objective::Revenue => 1.0,
            Objective::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Finest grid the objective can be evaluated on, if limited.
    pub fn resolution_limit(&self) -> Option<u32> {
        match self {
            Objective::Revenue => None,
            Objective::Custom { resolution, .. } => Some(*resolution),
        }
    }

    pub fn evaluate(&self, prices: &[f64], roles: &[Role]) -> Result<f64> {
        match self {
            Objective::Revenue => Ok(prices
                .iter()
                .zip(roles)
                .map(|(&p, role)| match role {
                    Role::Seller => -p,
                    Role::Buyer => p,
                })
                .sum()),
            Objective::Custom {
                resolution, values, ..
            } => {
                let k = f64::from(*resolution);
                let mut index = 0usize;
                for &p in prices {
                    let scaled = p * k;
                    let rounded = scaled.round();
                    if (scaled - rounded).abs() > 1e-9 || !(0.0..=k).contains(&rounded) {
                        return Err(Error::ContractViolation(format!(
                            "price {p} is not on the objective grid of resolution {resolution}"
                        )));
                    }
                    index = index * (*resolution as usize + 1) + rounded as usize;
                }
                Ok(values[index])
            }
        }
    }

    fn validate(&self, n: usize, roles: &[Role]) -> Result<()> {
        let Objective::Custom {
            resolution,
            lipschitz,
            values,
        } = self
        else {
            return Ok(());
        };
        if !resolution.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "objective resolution {resolution} must be a power of two"
            )));
        }
        if !(lipschitz.is_finite() && *lipschitz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant {lipschitz} must be positive"
            )));
        }
        let expected = (*resolution as usize + 1).pow(n as u32);
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "objective table has {} values, the grid has {expected} points",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "objective values must be finite".into(),
            ));
        }
        // Spot-check the declared constant on random pairs of table points.
        let mut rng = rng_stream(0, streams::OBJECTIVE_CHECK);
        let k = f64::from(*resolution);
        for _ in 0..2000 {
            let p: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.gen_range(0..=*resolution)) / k)
                .collect();
            let q: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.gen_range(0..=*resolution)) / k)
                .collect();
            let dist: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
            let gap = (self.evaluate(&p, roles)? - self.evaluate(&q, roles)?).abs();
            if gap > lipschitz * dist + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "objective changes by {gap} between {p:?} and {q:?}, more than {lipschitz} x {dist}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub roles: Vec<Role>,
    pub valuations: DistributionSpec,
    pub objective: Objective,
}

impl MarketSpec {
    pub fn new(
        roles: Vec<Role>,
        valuations: DistributionSpec,
        objective: Objective,
    ) -> Result<Self> {
        let market = Self {
            roles,
            valuations,
            objective,
        };
        market.validate()?;
        Ok(market)
    }

    /// One seller and one buyer with independent uniform values, revenue objective.
    pub fn bilateral_uniform() -> Self {
        Self::new(
            vec![Role::Seller, Role::Buyer],
            DistributionSpec::uniform(2),
            Objective::Revenue,
        )
        .expect("bilateral market is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let market: Self = serde_json::from_str(text)?;
        market.validate()?;
        Ok(market)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("market serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.valuations.validate()?;
        if self.roles.len() != self.valuations.n {
            return Err(Error::InvalidParameter(format!(
                "{} roles for {}-dimensional valuations",
                self.roles.len(),
                self.valuations.n
            )));
        }
        self.objective.validate(self.n(), &self.roles)
    }

    pub fn n(&self) -> usize {
        self.roles.len()
    }

    pub fn sellers(&self) -> usize {
        self.roles.iter().filter(|r| **r == Role::Seller).count()
    }

    pub fn buyers(&self) -> usize {
        self.n() - self.sellers()
    }

    /// Distribution of `X`, with buyer coordinates mirrored.
    pub fn cdf_distribution(&self) -> DistributionSpec {
        let mask: Vec<bool> = self.roles.iter().map(|r| *r == Role::Buyer).collect();
        self.valuations
            .reflect(&mask)
            .expect("mask matches dimension")
    }

    /// One-bit oracle whose query `x` answers `Trade(V, p)` for the prices `p` that map to `x`.
    pub fn trade_oracle(&self, seed: u64) -> BitFeedbackOracle {
        BitFeedbackOracle::new(self.cdf_distribution(), seed)
    }

    pub fn exact_oracle(&self) -> ExactOracle {
        ExactOracle::new(self.cdf_distribution())
    }

    pub fn objective_value(&self, prices: &[f64]) -> Result<f64> {
        self.objective.evaluate(prices, &self.roles)
    }

    /// Exact `E[Trade(V, p)] f(p)` for a real price vector.
    pub fn exact_utility(&self, exact: &ExactOracle, prices: &[f64]) -> Result<f64> {
        let x = to_cdf_coordinates(prices, &self.roles);
        Ok(exact.cdf(&x) * self.objective_value(prices)?)
    }
}

/// Exact `E[Trade(V, p)]`.
pub fn exact_trade_probability(market: &MarketSpec, prices: &[f64]) -> f64 {
    market
        .exact_oracle()
        .cdf(&to_cdf_coordinates(prices, &market.roles))
}

/// Price grid of resolution `nL / eps`, rounded up to a power of two.
pub fn pricing_grid(market: &MarketSpec, eps: f64) -> Result<GridSpec> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} must lie in (0,1)"
        )));
    }
    let n = market.n();
    let grid = GridSpec::from_real_resolution(n, n as f64 * market.objective.lipschitz() / eps)?;
    if let Some(limit) = market.objective.resolution_limit() {
        if grid.resolution() > limit {
            return Err(Error::InvalidParameter(format!(
                "pricing needs resolution {} but the objective table has only {limit}",
                grid.resolution()
            )));
        }
    }
    Ok(grid)
}

/// Learned trade probability on the price grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TradeProbability {
    roles: Vec<Role>,
    estimator: CdfEstimator,
}

impl TradeProbability {
    pub fn grid(&self) -> &GridSpec {
        self.estimator.grid()
    }

    pub fn estimator(&self) -> &CdfEstimator {
        &self.estimator
    }

    pub fn queries(&self) -> u64 {
        self.estimator.queries()
    }

    /// Estimated `E[Trade(V, p)]` at a price grid point.
    pub fn evaluate(&self, prices: &[GridEndpoint]) -> Result<f64> {
        self.estimator
            .evaluate(&to_cdf_grid(prices, &self.roles, self.grid()))
    }
}

fn learn_trade_probability(
    market: &MarketSpec,
    est: &mut ProbabilityEstimator,
    eps: f64,
    delta: f64,
    grid: GridSpec,
    mode: LearnMode,
) -> Result<TradeProbability> {
    let config = rhi_config(eps, delta, grid, mode)?;
    let family = rhi(est, &config)?;
    Ok(TradeProbability {
        roles: market.roles.clone(),
        estimator: CdfEstimator::new(family),
    })
}

/// Learns `E[Trade(V, p)]` on `grid` from an oracle built by [`MarketSpec::trade_oracle`].
pub fn trade_prob_on_grid(
    market: &MarketSpec,
    oracle: BitFeedbackOracle,
    eps: f64,
    delta: f64,
    grid: GridSpec,
    mode: LearnMode,
) -> Result<TradeProbability> {
    let mut est = ProbabilityEstimator::monte_carlo(oracle);
    learn_trade_probability(market, &mut est, eps, delta, grid, mode)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub resolution: u32,
    pub p_star: Vec<GridEndpoint>,
    pub prices: Vec<f64>,
    pub est_trade_probability: f64,
    pub est_value: f64,
    pub queries_used: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brute_force_gap: Option<f64>,
}

impl PricingResult {
    /// Exact `E[Trade(V, p*)] f(p*)`.
    pub fn exact_value(&self, market: &MarketSpec) -> Result<f64> {
        market.exact_utility(&market.exact_oracle(), &self.prices)
    }
}

/// Maximizes `P(p) f(p)` over the grid; ties go to the lexicographically smallest `p`.
pub fn argmax_on_grid(
    market: &MarketSpec,
    grid: &GridSpec,
    mut probability: impl FnMut(&[GridEndpoint]) -> Result<f64>,
) -> Result<(Vec<GridEndpoint>, f64, f64)> {
    let mut best: Option<(Vec<GridEndpoint>, f64, f64)> = None;
    for p in grid.points() {
        let prob = probability(&p)?;
        let value = prob * market.objective_value(&grid.to_real(&p))?;
        if best.as_ref().is_none_or(|(_, _, v)| value > *v) {
            best = Some((p, prob, value));
        }
    }
    Ok(best.expect("grids are nonempty"))
}

fn pricing_from(market: &MarketSpec, trade: &TradeProbability) -> Result<PricingResult> {
    let grid = *trade.grid();
    let (p_star, prob, value) = argmax_on_grid(market, &grid, |p| trade.evaluate(p))?;
    Ok(PricingResult {
        resolution: grid.resolution(),
        prices: grid.to_real(&p_star),
        p_star,
        est_trade_probability: prob,
        est_value: value,
        queries_used: trade.queries(),
        brute_force_gap: None,
    })
}

/// Learns near-optimal fixed prices to accuracy `eps` with confidence `1 - delta`.
///
/// The theoretical mode learns trade probabilities at accuracy `eps / 3`.
pub fn learn_pricing(
    market: &MarketSpec,
    oracle: BitFeedbackOracle,
    eps: f64,
    delta: f64,
    mode: LearnMode,
) -> Result<PricingResult> {
    let grid = pricing_grid(market, eps)?;
    let trade = trade_prob_on_grid(market, oracle, eps / 3.0, delta, grid, mode)?;
    pricing_from(market, &trade)
}

/// Exact optimum of `E[Trade] f` over the grid of resolution `k`.
pub fn brute_force_optimum(market: &MarketSpec, k: u32) -> Result<(Vec<f64>, f64)> {
    let grid = GridSpec::new(market.n(), k)?;
    let exact = market.exact_oracle();
    let (p, _, value) = argmax_on_grid(market, &grid, |p| {
        Ok(exact.cdf(&grid.to_real(&to_cdf_grid(p, &market.roles, &grid))))
    })?;
    Ok((grid.to_real(&p), value))
}

/// Benchmark resolution: the fixed fine grid, capped by a custom objective table.
pub fn benchmark_resolution(market: &MarketSpec) -> u32 {
    market
        .objective
        .resolution_limit()
        .map_or(BENCHMARK_RESOLUTION, |r| r.min(BENCHMARK_RESOLUTION))
}

/// How explore-then-commit picks its internal accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EtcMode {
    /// Learns at `eps = T^{-1/4}`, `delta = 1/T` with the worst-case internal accuracy.
    Theoretical,
    /// Same `eps` and `delta`, internal accuracy `scale * T^{-1/4}` (capped below 1).
    Practical { scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub round: u64,
    pub prices: Vec<f64>,
    pub exact_utility: f64,
    pub trade: bool,
    pub cum_regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub horizon: u64,
    pub eps: f64,
    pub delta: f64,
    pub eps_prime: f64,
    pub resolution: u32,
    pub benchmark_resolution: u32,
    pub benchmark_prices: Vec<f64>,
    pub benchmark_value: f64,
    pub exploration_rounds: u64,
    pub saturated: bool,
    pub p_star: Option<Vec<f64>>,
    pub rows: Vec<RegretRow>,
}

impl RegretTrace {
    /// `REG_T`.
    pub fn regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn regret_per_round(&self) -> f64 {
        self.regret() / self.horizon as f64
    }
}

/// `T^{-1/4}`.
pub fn etc_accuracy(horizon: u64) -> f64 {
    (horizon as f64).powf(-0.25)
}

/// Explore-then-commit over `horizon` rounds.
///
/// Every learner query is one round, played at the prices the query point maps
/// to. If the learner needs more than `horizon` queries, the trace holds only
/// exploration rounds and is flagged saturated.
pub fn etc_regret(
    market: &MarketSpec,
    horizon: u64,
    mode: EtcMode,
    seed: u64,
) -> Result<RegretTrace> {
    if horizon < 16 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be at least 16"
        )));
    }
    let eps = etc_accuracy(horizon);
    let delta = 1.0 / horizon as f64;
    let grid = pricing_grid(market, eps)?;
    let learn_mode = match mode {
        EtcMode::Theoretical => LearnMode::Theoretical,
        EtcMode::Practical { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "accuracy scale {scale} must be positive"
                )));
            }
            LearnMode::Practical {
                eps_prime: (scale * eps).min(0.5),
            }
        }
    };
    let eps_prime = rhi_config(eps / 3.0, delta, grid, learn_mode)?.eps_prime;

    let log_limit = usize::try_from(horizon)
        .map_err(|_| Error::InvalidParameter("horizon too large".into()))?;
    let oracle = market
        .trade_oracle(seed)
        .with_query_cap(horizon)
        .with_query_log(log_limit);
    let mut est = ProbabilityEstimator::monte_carlo(oracle);
    let learned =
        match learn_trade_probability(market, &mut est, eps / 3.0, delta, grid, learn_mode) {
            Ok(trade) => Some(pricing_from(market, &trade)?),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        };
    let oracle = est
        .into_oracle()
        .expect("Monte Carlo estimator owns an oracle");

    let exact = market.exact_oracle();
    let k_bench = benchmark_resolution(market);
    let (benchmark_prices, benchmark_value) = brute_force_optimum(market, k_bench)?;
    let mut rows = Vec::with_capacity(log_limit);
    let mut cum_regret = 0.0;
    let mut push = |rows: &mut Vec<RegretRow>, prices: Vec<f64>, trade: bool| -> Result<()> {
        let exact_utility = market.exact_utility(&exact, &prices)?;
        cum_regret += benchmark_value - exact_utility;
        rows.push(RegretRow {
            round: rows.len() as u64 + 1,
            prices,
            exact_utility,
            trade,
            cum_regret,
        });
        Ok(())
    };
    for record in oracle.log() {
        push(
            &mut rows,
            to_cdf_coordinates(&record.point, &market.roles),
            record.bit,
        )?;
    }
    let exploration_rounds = rows.len() as u64;

    if let Some(pricing) = &learned {
        let mut rng = rng_stream(seed, streams::MARKET);
        let mut values = vec![0.0; market.n()];
        while (rows.len() as u64) < horizon {
            market.valuations.sample_into(&mut rng, &mut values);
            let traded = trade(&values, &pricing.prices, &market.roles);
            push(&mut rows, pricing.prices.clone(), traded)?;
        }
    }

    Ok(RegretTrace {
        horizon,
        eps,
        delta,
        eps_prime,
        resolution: grid.resolution(),
        benchmark_resolution: k_bench,
        benchmark_prices,
        benchmark_value,
        exploration_rounds,
        saturated: learned.is_none(),
        p_star: learned.map(|p| p.prices),
        rows,
    })
}
