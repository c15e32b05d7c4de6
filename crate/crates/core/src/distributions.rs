//! Synthetic distributions on `[0,1]^n` with closed-form box probabilities.
//!
//! [`ExactOracle`] is the ground truth used by tests and reports.
//! [`BitFeedbackOracle`] draws fresh samples and reveals only `1[X <= x]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Hyperrectangle, RealInterval};

const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Seeded generator for one named stream of an experiment.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used across the crate. Distinct streams never overlap for a given seed.
pub mod streams {
    pub const SAMPLES: u64 = 0;
    pub const LEARNER: u64 = 1;
    pub const MARKET: u64 = 2;
    pub const OBJECTIVE_CHECK: u64 = 3;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub n: usize,
    /// Declared supremum of the density. Only valid for atom-free specs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_bound: Option<f64>,
    #[serde(flatten)]
    pub components: Components,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Components {
    /// Independent coordinates, each a mixture of uniform segments and atoms.
    #[serde(rename = "product_of_1d")]
    ProductOf1d { marginals: Vec<Marginal> },
    /// Mixture of axis-aligned boxes, uniform inside each.
    BoxMixture { boxes: Vec<WeightedBox> },
    /// Mixture of point masses.
    AtomMixture { atoms: Vec<WeightedAtom> },
    /// Convex combination of the other kinds.
    Composite { parts: Vec<WeightedPart> },
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Marginal {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom1d>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom1d {
    pub weight: f64,
    pub at: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBox {
    pub weight: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    pub weight: f64,
    pub at: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPart {
    pub weight: f64,
    #[serde(flatten)]
    pub components: Components,
}

impl DistributionSpec {
    /// Validates and wraps the given components.
    pub fn new(n: usize, components: Components, density_bound: Option<f64>) -> Result<Self> {
        let spec = Self {
            n,
            density_bound,
            components,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform on `[0,1]^n`, density bound 1.
    pub fn uniform(n: usize) -> Self {
        Self::boxes(n, vec![(1.0, vec![0.0; n], vec![1.0; n])])
            .expect("unit box is valid")
            .with_density_bound(1.0)
            .expect("uniform has no atoms")
    }

    pub fn boxes(n: usize, boxes: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let boxes = boxes
            .into_iter()
            .map(|(weight, lo, hi)| WeightedBox { weight, lo, hi })
            .collect();
        Self::new(n, Components::BoxMixture { boxes }, None)
    }

    pub fn atoms(n: usize, atoms: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let atoms = atoms
            .into_iter()
            .map(|(weight, at)| WeightedAtom { weight, at })
            .collect();
        Self::new(n, Components::AtomMixture { atoms }, None)
    }

    pub fn product(marginals: Vec<Marginal>) -> Result<Self> {
        let n = marginals.len();
        Self::new(n, Components::ProductOf1d { marginals }, None)
    }

    pub fn with_density_bound(mut self, sigma: f64) -> Result<Self> {
        self.density_bound = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidDistribution(
                "dimension must be positive".into(),
            ));
        }
        self.components.validate(self.n)?;
        if let Some(sigma) = self.density_bound {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "density bound {sigma} must be positive"
                )));
            }
            if self.has_atoms() {
                return Err(Error::InvalidDistribution(
                    "a density bound cannot be declared for a spec with atoms".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn has_atoms(&self) -> bool {
        self.components.has_atoms()
    }

    /// Mirrors coordinate `i` to `1 - x_i` wherever `mask[i]` is set.
    pub fn reflect(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "reflection mask has {} entries for a {}-dimensional spec",
                mask.len(),
                self.n
            )));
        }
        Ok(Self {
            n: self.n,
            density_bound: self.density_bound,
            components: self.components.reflect(mask),
        })
    }

    /// Draws one sample into `out` (length `n`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.components.sample_into(rng, out);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.sample_into(rng, &mut out);
        out
    }
}

fn check_weights(weights: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "{what}: weight {w} is not a nonnegative number"
            )));
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what}: weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!(
            "{what}: {x} lies outside [0,1]"
        )))
    }
}

fn check_span(lo: f64, hi: f64, what: &str) -> Result<()> {
    check_unit(lo, what)?;
    check_unit(hi, what)?;
    if lo < hi {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!(
            "{what}: empty support [{lo}, {hi}]"
        )))
    }
}

fn draw_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (idx, w) in weights.enumerate() {
        if w > 0.0 {
            last = idx;
            if u < w {
                return idx;
            }
            u -= w;
        }
    }
    last
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo + (hi - lo) * rng.gen::<f64>()).min(hi)
}

impl Components {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Components::ProductOf1d { marginals } => {
                if marginals.len() != n {
                    return Err(Error::InvalidDistribution(format!(
                        "product has {} marginals for n = {n}",
                        marginals.len()
                    )));
                }
                for (i, m) in marginals.iter().enumerate() {
                    let what = format!("marginal {i}");
                    check_weights(
                        m.segments
                            .iter()
                            .map(|s| s.weight)
                            .chain(m.atoms.iter().map(|a| a.weight)),
                        &what,
                    )?;
                    for s in &m.segments {
                        check_span(s.lo, s.hi, &what)?;
                    }
                    for a in &m.atoms {
                        check_unit(a.at, &what)?;
                    }
                }
            }
            Components::BoxMixture { boxes } => {
                check_weights(boxes.iter().map(|b| b.weight), "box mixture")?;
                for b in boxes {
                    if b.lo.len() != n || b.hi.len() != n {
                        return Err(Error::InvalidDistribution(format!(
                            "box corners must have {n} coordinates"
                        )));
                    }
                    for (&lo, &hi) in b.lo.iter().zip(&b.hi) {
                        check_span(lo, hi, "box")?;
                    }
                }
            }
            Components::AtomMixture { atoms } => {
                check_weights(atoms.iter().map(|a| a.weight), "atom mixture")?;
                for a in atoms {
                    if a.at.len() != n {
                        return Err(Error::InvalidDistribution(format!(
                            "atoms must have {n} coordinates"
                        )));
                    }
                    for &x in &a.at {
                        check_unit(x, "atom")?;
                    }
                }
            }
            Components::Composite { parts } => {
                check_weights(parts.iter().map(|p| p.weight), "composite")?;
                for p in parts {
                    p.components.validate(n)?;
                }
            }
        }
        Ok(())
    }

    fn has_atoms(&self) -> bool {
        match self {
            Components::ProductOf1d { marginals } => marginals
                .iter()
                .any(|m| m.atoms.iter().any(|a| a.weight > 0.0)),
            Components::BoxMixture { .. } => false,
            Components::AtomMixture { atoms } => atoms.iter().any(|a| a.weight > 0.0),
            Components::Composite { parts } => parts
                .iter()
                .any(|p| p.weight > 0.0 && p.components.has_atoms()),
        }
    }

    /// Probability of the box `rect` under the marginal on the first `rect.len()` coordinates.
    fn probability(&self, rect: &[RealInterval]) -> f64 {
        match self {
            Components::ProductOf1d { marginals } => rect
                .iter()
                .zip(marginals)
                .map(|(iv, m)| m.probability(iv))
                .product(),
            Components::BoxMixture { boxes } => boxes
                .iter()
                .map(|b| {
                    let inside: f64 = rect
                        .iter()
                        .enumerate()
                        .map(|(i, iv)| iv.overlap_length(b.lo[i], b.hi[i]) / (b.hi[i] - b.lo[i]))
                        .product();
                    b.weight * inside
                })
                .sum(),
            Components::AtomMixture { atoms } => atoms
                .iter()
                .filter(|a| rect.iter().zip(&a.at).all(|(iv, &x)| iv.contains(x)))
                .map(|a| a.weight)
                .sum(),
            Components::Composite { parts } => parts
                .iter()
                .map(|p| p.weight * p.components.probability(rect))
                .sum(),
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Components::ProductOf1d { marginals } => {
                for (slot, m) in out.iter_mut().zip(marginals) {
                    *slot = m.sample(rng);
                }
            }
            Components::BoxMixture { boxes } => {
                let b = &boxes[draw_index(rng, boxes.iter().map(|b| b.weight))];
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = uniform_in(rng, b.lo[i], b.hi[i]);
                }
            }
            Components::AtomMixture { atoms } => {
                let a = &atoms[draw_index(rng, atoms.iter().map(|a| a.weight))];
                out.copy_from_slice(&a.at);
            }
            Components::Composite { parts } => {
                let p = &parts[draw_index(rng, parts.iter().map(|p| p.weight))];
                p.components.sample_into(rng, out);
            }
        }
    }

    fn reflect(&self, mask: &[bool]) -> Components {
        let flip = |i: usize, x: f64| if mask[i] { 1.0 - x } else { x };
        match self {
            Components::ProductOf1d { marginals } => Components::ProductOf1d {
                marginals: marginals
                    .iter()
                    .enumerate()
                    .map(|(i, m)| Marginal {
                        segments: m
                            .segments
                            .iter()
                            .map(|s| {
                                let (lo, hi) = if mask[i] {
                                    (1.0 - s.hi, 1.0 - s.lo)
                                } else {
                                    (s.lo, s.hi)
                                };
                                Segment {
                                    weight: s.weight,
                                    lo,
                                    hi,
                                }
                            })
                            .collect(),
                        atoms: m
                            .atoms
                            .iter()
                            .map(|a| Atom1d {
                                weight: a.weight,
                                at: flip(i, a.at),
                            })
                            .collect(),
                    })
                    .collect(),
            },
            Components::BoxMixture { boxes } => Components::BoxMixture {
                boxes: boxes
                    .iter()
                    .map(|b| {
                        let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
                        for i in 0..lo.len() {
                            if mask[i] {
                                lo[i] = 1.0 - b.hi[i];
                                hi[i] = 1.0 - b.lo[i];
                            }
                        }
                        WeightedBox {
                            weight: b.weight,
                            lo,
                            hi,
                        }
                    })
                    .collect(),
            },
            Components::AtomMixture { atoms } => Components::AtomMixture {
                atoms: atoms
                    .iter()
                    .map(|a| WeightedAtom {
                        weight: a.weight,
                        at: a.at.iter().enumerate().map(|(i, &x)| flip(i, x)).collect(),
                    })
                    .collect(),
            },
            Components::Composite { parts } => Components::Composite {
                parts: parts
                    .iter()
                    .map(|p| WeightedPart {
                        weight: p.weight,
                        components: p.components.reflect(mask),
                    })
                    .collect(),
            },
        }
    }
}

impl Marginal {
    pub fn uniform() -> Self {
        Self {
            segments: vec![Segment {
                weight: 1.0,
                lo: 0.0,
                hi: 1.0,
            }],
            atoms: Vec::new(),
        }
    }

    fn probability(&self, iv: &RealInterval) -> f64 {
        let continuous: f64 = self
            .segments
            .iter()
            .map(|s| s.weight * iv.overlap_length(s.lo, s.hi) / (s.hi - s.lo))
            .sum();
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| iv.contains(a.at))
            .map(|a| a.weight)
            .sum();
        continuous + atoms
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let weights = self
            .segments
            .iter()
            .map(|s| s.weight)
            .chain(self.atoms.iter().map(|a| a.weight));
        let idx = draw_index(rng, weights);
        match self.segments.get(idx) {
            Some(s) => uniform_in(rng, s.lo, s.hi),
            None => self.atoms[idx - self.segments.len()].at,
        }
    }
}

/// Closed-form probabilities of a [`DistributionSpec`].
#[derive(Clone, Debug)]
pub struct ExactOracle {
    spec: DistributionSpec,
}

impl ExactOracle {
    pub fn new(spec: DistributionSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.n
    }

    /// Probability of `rect` under the marginal on its first `rect.len()` coordinates.
    pub fn real_box_probability(&self, rect: &[RealInterval]) -> Result<f64> {
        if rect.len() > self.spec.n {
            return Err(Error::Unsupported(format!(
                "{}-dimensional box for a {}-dimensional distribution",
                rect.len(),
                self.spec.n
            )));
        }
        Ok(self.spec.components.probability(rect))
    }

    /// Probability of a grid hyperrectangle under the marginal on its dimensions.
    pub fn box_probability(&self, rect: &Hyperrectangle, grid: &GridSpec) -> Result<f64> {
        self.real_box_probability(&rect.to_real(grid))
    }

    /// `P(X <= x)`, with atoms on the boundary counted.
    pub fn cdf(&self, x: &[f64]) -> f64 {
        let rect: Vec<_> = x.iter().map(|&xi| RealInterval::prefix(xi)).collect();
        self.spec.components.probability(&rect)
    }
}

/// A query point and the bit it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub point: Vec<f64>,
    pub bit: bool,
}

/// Query-counted one-bit comparison oracle.
#[derive(Clone, Debug)]
pub struct BitFeedbackOracle {
    spec: DistributionSpec,
    seed: u64,
    rng: ChaCha8Rng,
    query_count: u64,
    cap: Option<u64>,
    log_limit: usize,
    log: Vec<QueryRecord>,
    sample: Vec<f64>,
}

impl BitFeedbackOracle {
    pub fn new(spec: DistributionSpec, seed: u64) -> Self {
        let n = spec.n;
        Self {
            spec,
            seed,
            rng: rng_stream(seed, streams::SAMPLES),
            query_count: 0,
            cap: None,
            log_limit: 0,
            log: Vec::new(),
            sample: vec![0.0; n],
        }
    }

    /// Fails any query beyond the `cap`-th with [`Error::BudgetExceeded`].
    pub fn with_query_cap(mut self, cap: u64) -> Self {
        self.cap = Some(cap);
        self
    }

    /// Records the first `limit` queries and their bits.
    pub fn with_query_log(mut self, limit: usize) -> Self {
        self.log_limit = limit;
        self
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.spec.n
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn query_cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    /// Draws a fresh `X_t` and returns `1[X_t <= x]`.
    pub fn query(&mut self, x: &[f64]) -> Result<bool> {
        if let Some(cap) = self.cap {
            if self.query_count >= cap {
                return Err(Error::BudgetExceeded { cap });
            }
        }
        debug_assert_eq!(x.len(), self.spec.n);
        self.spec.sample_into(&mut self.rng, &mut self.sample);
        let bit = self.sample.iter().zip(x).all(|(s, q)| s <= q);
        self.query_count += 1;
        if self.log.len() < self.log_limit {
            self.log.push(QueryRecord {
                point: x.to_vec(),
                bit,
            });
        }
        Ok(bit)
    }

    /// Draws a full sample; used by the full-feedback baseline, not counted as a query.
    pub fn draw_full_sample(&mut self) -> Vec<f64> {
        self.spec.sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridEndpoint, Interval};

    fn e(n: u32) -> GridEndpoint {
        GridEndpoint(n)
    }

    #[test]
    fn uniform_box_probabilities() {
        let oracle = ExactOracle::new(DistributionSpec::uniform(2));
        let g = GridSpec::new(2, 2).unwrap();
        let half = Interval::half_open(e(0), e(1)).unwrap();
        let a = Hyperrectangle::unit().extend(half);
        assert_eq!(oracle.box_probability(&a, &g).unwrap(), 0.5);
        assert_eq!(oracle.box_probability(&a.extend(half), &g).unwrap(), 0.25);
        assert_eq!(
            oracle.box_probability(&Hyperrectangle::unit(), &g).unwrap(),
            1.0
        );
        let too_big = a.extend(half).extend(half);
        assert!(matches!(
            oracle.box_probability(&too_big, &g),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn atom_membership_in_marginal() {
        let oracle =
            ExactOracle::new(DistributionSpec::atoms(2, vec![(1.0, vec![0.3, 0.7])]).unwrap());
        let g = GridSpec::new(2, 8).unwrap();
        let a = Hyperrectangle::unit().extend(Interval::half_open(e(2), e(3)).unwrap());
        assert_eq!(oracle.box_probability(&a, &g).unwrap(), 1.0);
        let b = Hyperrectangle::unit().extend(Interval::half_open(e(3), e(4)).unwrap());
        assert_eq!(oracle.box_probability(&b, &g).unwrap(), 0.0);
    }

    #[test]
    fn atom_boundary_semantics() {
        let oracle = ExactOracle::new(
            DistributionSpec::atoms(1, vec![(0.5, vec![0.0]), (0.5, vec![0.5])]).unwrap(),
        );
        let g = GridSpec::new(1, 2).unwrap();
        let p = |i: Interval| {
            oracle
                .box_probability(&Hyperrectangle::unit().extend(i), &g)
                .unwrap()
        };
        assert_eq!(p(Interval::degenerate_zero()), 0.5);
        // (0, 1/2] includes the atom at its right end and excludes the one at 0.
        assert_eq!(p(Interval::half_open(e(0), e(1)).unwrap()), 0.5);
        assert_eq!(p(Interval::half_open(e(1), e(2)).unwrap()), 0.0);
        assert_eq!(p(Interval::closed_from_zero(e(1)).unwrap()), 1.0);
        assert_eq!(oracle.cdf(&[0.0]), 0.5);
    }

    #[test]
    fn cdf_examples() {
        let u = ExactOracle::new(DistributionSpec::uniform(2));
        assert_eq!(u.cdf(&[1.0, 1.0]), 1.0);
        assert_eq!(u.cdf(&[0.5, 0.5]), 0.25);
        let mix = DistributionSpec::boxes(
            2,
            vec![
                (0.5, vec![0.0, 0.0], vec![0.5, 0.5]),
                (0.5, vec![0.5, 0.5], vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        assert!((ExactOracle::new(mix).cdf(&[0.75, 0.75]) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(DistributionSpec::boxes(1, vec![(0.5, vec![0.0], vec![1.0])]).is_err());
        assert!(DistributionSpec::boxes(1, vec![(1.0, vec![0.5], vec![0.5])]).is_err());
        assert!(DistributionSpec::boxes(1, vec![(1.0, vec![0.0], vec![1.5])]).is_err());
        assert!(DistributionSpec::atoms(2, vec![(1.0, vec![0.5])]).is_err());
        let atom = DistributionSpec::atoms(1, vec![(1.0, vec![0.5])]).unwrap();
        assert!(atom.with_density_bound(1.0).is_err());
        assert!(DistributionSpec::from_json(r#"{"n":1,"kind":"box_mixture"}"#).is_err());
        assert!(DistributionSpec::from_json("not json").is_err());
    }

    #[test]
    fn json_round_trip_all_kinds() {
        let text = r#"{
            "n": 2,
            "kind": "composite",
            "parts": [
                {"weight": 0.5, "kind": "product_of_1d", "marginals": [
                    {"segments": [{"weight": 0.75, "lo": 0.0, "hi": 0.5}], "atoms": [{"weight": 0.25, "at": 0.9}]},
                    {"segments": [{"weight": 1.0, "lo": 0.0, "hi": 1.0}]}
                ]},
                {"weight": 0.25, "kind": "box_mixture", "boxes": [{"weight": 1.0, "lo": [0.1, 0.2], "hi": [0.3, 0.4]}]},
                {"weight": 0.25, "kind": "atom_mixture", "atoms": [{"weight": 1.0, "at": [0.3, 0.7]}]}
            ]
        }"#;
        let spec = DistributionSpec::from_json(text).unwrap();
        assert!(spec.has_atoms());
        let again = DistributionSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn reflection_mirrors_cdf() {
        let spec = DistributionSpec::boxes(2, vec![(1.0, vec![0.0, 0.0], vec![0.5, 1.0])]).unwrap();
        let flipped = ExactOracle::new(spec.reflect(&[true, false]).unwrap());
        // X_0 uniform on [0.5, 1] after reflection.
        assert_eq!(flipped.cdf(&[0.5, 1.0]), 0.0);
        assert!((flipped.cdf(&[0.75, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_bit_oracle_counts_and_extremes() {
        let mut o = BitFeedbackOracle::new(DistributionSpec::uniform(2), 7);
        for _ in 0..100 {
            assert!(o.query(&[1.0, 1.0]).unwrap());
            assert!(!o.query(&[0.0, 0.0]).unwrap());
        }
        assert_eq!(o.query_count(), 200);
    }

    #[test]
    fn one_bit_oracle_honours_cap_and_log() {
        let mut o = BitFeedbackOracle::new(DistributionSpec::uniform(1), 1)
            .with_query_cap(3)
            .with_query_log(2);
        for _ in 0..3 {
            o.query(&[0.5]).unwrap();
        }
        assert!(matches!(
            o.query(&[0.5]),
            Err(Error::BudgetExceeded { cap: 3 })
        ));
        assert_eq!(o.query_count(), 3);
        assert_eq!(o.log().len(), 2);
        assert_eq!(o.log()[0].point, vec![0.5]);
    }

    #[test]
    fn one_bit_frequency_matches_cdf() {
        // 1e5 draws of a fair bit: 3 sigma = 3 * 0.5 / sqrt(1e5) ~ 0.0047.
        let mut o = BitFeedbackOracle::new(DistributionSpec::uniform(1), 42);
        let hits = (0..100_000).filter(|_| o.query(&[0.5]).unwrap()).count();
        assert!((hits as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = DistributionSpec::uniform(2);
        let mut a = BitFeedbackOracle::new(spec.clone(), 9);
        let mut b = BitFeedbackOracle::new(spec, 9);
        for t in 0..500 {
            let x = [(t % 7) as f64 / 7.0, 0.5];
            assert_eq!(a.query(&x).unwrap(), b.query(&x).unwrap());
        }
    }
}
