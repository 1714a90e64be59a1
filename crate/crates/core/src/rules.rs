//! Learning-rule sets: the indirect encoding of a plastic network.
//!
//! A [`RuleSet`] is a list of ABCD rules plus an assignment mapping every
//! synapse (in global synapse order, see [`crate::net`]) to one rule. Only the
//! rule parameters form the evolved genome; the assignment is fixed at
//! construction and coarsened by [`merge_rules`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::net::{NetworkSpec, RuleVariant};
use crate::scalar::Scalar;
use crate::seed;

/// Standard deviation of the normal distribution rule parameters start from.
pub const INIT_RULE_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RuleParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub alpha: T,
}

impl<T: Scalar> RuleParams<T> {
    pub fn new(a: T, b: T, c: T, d: T, alpha: T) -> Self {
        RuleParams { a, b, c, d, alpha }
    }

    pub fn zero() -> Self {
        let z = T::zero();
        RuleParams::new(z, z, z, z, z)
    }

    /// Genome slice for one rule: `[A, B, C, D, alpha]` or `[A, B, C]`.
    pub fn to_vec(&self, variant: RuleVariant) -> Vec<T> {
        match variant {
            RuleVariant::AbcdAlpha => vec![self.a, self.b, self.c, self.d, self.alpha],
            RuleVariant::Abc => vec![self.a, self.b, self.c],
        }
    }

    pub fn from_slice(v: &[T], variant: RuleVariant) -> Result<Self> {
        let z = T::zero();
        match (variant, v) {
            (RuleVariant::AbcdAlpha, &[a, b, c, d, alpha]) => Ok(RuleParams::new(a, b, c, d, alpha)),
            (RuleVariant::Abc, &[a, b, c]) => Ok(RuleParams::new(a, b, c, z, z)),
            _ => Err(Error::Encoding(format!(
                "{variant:?} rule needs {} values, got {}",
                variant.params_per_rule(),
                v.len()
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.d, self.alpha]
            .iter()
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RuleSet<T> {
    pub variant: RuleVariant,
    pub rules: Vec<RuleParams<T>>,
    pub assignment: Vec<usize>,
}

impl<T: Scalar> RuleSet<T> {
    /// One rule per synapse, all set to `rule`.
    pub fn uniform(variant: RuleVariant, connection_count: usize, rule: RuleParams<T>) -> Self {
        RuleSet {
            variant,
            rules: vec![rule; connection_count],
            assignment: (0..connection_count).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn connection_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.rules.len() * self.variant.params_per_rule()
    }

    /// Number of synapses assigned to each rule.
    pub fn usage(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rules.len()];
        for &r in &self.assignment {
            counts[r] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::Encoding("rule set is empty".into()));
        }
        if let Some(&bad) = self.assignment.iter().find(|&&r| r >= self.rules.len()) {
            return Err(Error::Encoding(format!(
                "assignment references rule {bad} of {}",
                self.rules.len()
            )));
        }
        if let Some(orphan) = self.usage().iter().position(|&c| c == 0) {
            return Err(Error::Encoding(format!("rule {orphan} governs no synapse")));
        }
        if let Some(i) = self.rules.iter().position(|r| !r.is_finite()) {
            return Err(Error::Encoding(format!("rule {i} has non-finite parameters")));
        }
        Ok(())
    }

    /// Flat genome, rule-major: `[A, B, C, D, alpha]` per rule (ABC: `[A, B, C]`).
    pub fn to_genome(&self) -> Vec<T> {
        self.rules
            .iter()
            .flat_map(|r| r.to_vec(self.variant))
            .collect()
    }

    /// Rebuilds a rule set from a genome, keeping the template's assignment.
    pub fn with_genome(&self, genome: &[T]) -> Result<Self> {
        let per = self.variant.params_per_rule();
        if genome.len() != self.rules.len() * per {
            return Err(Error::Encoding(format!(
                "genome of {} rules needs {} values, got {}",
                self.rules.len(),
                self.rules.len() * per,
                genome.len()
            )));
        }
        let rules = genome
            .chunks_exact(per)
            .map(|c| RuleParams::from_slice(c, self.variant))
            .collect::<Result<_>>()?;
        Ok(RuleSet {
            variant: self.variant,
            rules,
            assignment: self.assignment.clone(),
        })
    }
}

pub fn rules_to_genome<T: Scalar>(rs: &RuleSet<T>) -> Vec<T> {
    rs.to_genome()
}

pub fn genome_to_rules<T: Scalar>(genome: &[T], template: &RuleSet<T>) -> Result<RuleSet<T>> {
    template.with_genome(genome)
}

/// Gives every unused rule one synapse, taken each time from the
/// lowest-indexed synapse whose rule governs more than one synapse.
pub fn repair_orphans(assignment: &mut [usize], n_rules: usize) {
    let mut counts = vec![0usize; n_rules];
    for &r in assignment.iter() {
        counts[r] += 1;
    }
    let mut cursor = 0;
    for orphan in 0..n_rules {
        if counts[orphan] > 0 {
            continue;
        }
        // Donors only lose synapses, so a synapse skipped once stays skipped.
        while counts[assignment[cursor]] <= 1 {
            cursor += 1;
        }
        counts[assignment[cursor]] -= 1;
        assignment[cursor] = orphan;
        counts[orphan] = 1;
        cursor += 1;
    }
}

/// `n_rules` rules with parameters drawn i.i.d. from `N(0, 0.1)`. With one
/// rule per synapse the assignment is the identity; otherwise every synapse
/// picks a rule uniformly at random and orphans are repaired.
pub fn init_rules<T: Scalar>(spec: &NetworkSpec, n_rules: usize, seed: u64) -> Result<RuleSet<T>> {
    let n_syn = spec.connection_count();
    if n_rules == 0 || n_rules > n_syn {
        return Err(Error::Config(format!(
            "rule count must be in 1..={n_syn}, got {n_rules}"
        )));
    }
    let variant = spec.rule_variant;
    let mut rng = seed::rng(seed, &[seed::STREAM_RULES]);
    let normal = Normal::new(0.0, INIT_RULE_STD).expect("valid normal");
    let per = variant.params_per_rule();
    let rules = (0..n_rules)
        .map(|_| {
            let v: Vec<T> = (0..per).map(|_| T::of(normal.sample(&mut rng))).collect();
            RuleParams::from_slice(&v, variant)
        })
        .collect::<Result<Vec<_>>>()?;
    let assignment = if n_rules == n_syn {
        (0..n_syn).collect()
    } else {
        let mut a: Vec<usize> = (0..n_syn).map(|_| rng.random_range(0..n_rules)).collect();
        repair_orphans(&mut a, n_rules);
        a
    };
    Ok(RuleSet {
        variant,
        rules,
        assignment,
    })
}

/// Clusters the rules into `k` centers and reassigns every synapse to the
/// center of its previous rule.
pub fn merge_rules<T: Scalar>(rs: &RuleSet<T>, k: usize, cfg: &KMeansConfig) -> Result<RuleSet<T>> {
    if k == 0 || k >= rs.rules.len() {
        return Err(Error::Clustering(format!(
            "merge target {k} must be in 1..{}",
            rs.rules.len()
        )));
    }
    let points: Vec<Vec<T>> = rs.rules.iter().map(|r| r.to_vec(rs.variant)).collect();
    let clusters = kmeans(&points, k, cfg)?;
    let rules = clusters
        .centers
        .iter()
        .map(|c| RuleParams::from_slice(c, rs.variant))
        .collect::<Result<Vec<_>>>()?;
    let mut assignment: Vec<usize> = rs.assignment.iter().map(|&r| clusters.labels[r]).collect();
    repair_orphans(&mut assignment, k);
    Ok(RuleSet {
        variant: rs.variant,
        rules,
        assignment,
    })
}
