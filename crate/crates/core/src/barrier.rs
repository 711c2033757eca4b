//! Barrier control: the rules deciding when a worker may begin its next iteration.
//!
//! Four methods are provided. BSP admits a worker only when no peer is behind it, ASP
//! always admits, and SSP admits while the slowest peer is at most `s` iterations behind.
//! The probabilistic method wraps BSP or SSP: instead of consulting every node it draws
//! a fresh uniform sample of peers at each admission check and applies the inner rule to
//! that sample only. An empty sample admits, which makes a zero sample size behave exactly
//! like ASP.
//!
//! | system            | barrier methods         |
//! |-------------------|-------------------------|
//! | MapReduce, Spark  | BSP                     |
//! | Pregel            | BSP (supersteps)        |
//! | Hogwild!          | ASP, SSP                |
//! | Parameter servers | BSP, ASP, SSP           |
//! | Cyclic delay      | SSP                     |
//! | Yahoo! LDA        | SSP, ASP                |
//! | Owl + Actor       | BSP, ASP, SSP, PSP      |
//!
//! Hogwild!-style lock-free shared memory is not modelled.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NodeId;

/// Maximum permitted lag behind the slowest viewed peer.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StalenessRepr", into = "StalenessRepr")]
pub enum Staleness {
    Bounded(u64),
    Unbounded,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StalenessRepr {
    Bounded(u64),
    Named(String),
}

impl TryFrom<StalenessRepr> for Staleness {
    type Error = String;

    fn try_from(r: StalenessRepr) -> Result<Self, String> {
        match r {
            StalenessRepr::Bounded(s) => Ok(Staleness::Bounded(s)),
            StalenessRepr::Named(s) => s.parse(),
        }
    }
}

impl From<Staleness> for StalenessRepr {
    fn from(s: Staleness) -> Self {
        match s {
            Staleness::Bounded(s) => StalenessRepr::Bounded(s),
            Staleness::Unbounded => StalenessRepr::Named("unbounded".into()),
        }
    }
}

impl FromStr for Staleness {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unbounded" | "inf" | "infinity" => Ok(Staleness::Unbounded),
            other => other
                .parse()
                .map(Staleness::Bounded)
                .map_err(|_| format!("expected a nonnegative integer or `unbounded`, got `{s}`")),
        }
    }
}

impl fmt::Display for Staleness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Staleness::Bounded(s) => write!(f, "{s}"),
            Staleness::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Rule applied to the sampled view by a probabilistic barrier.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum InnerMethod {
    Bsp,
    Ssp,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BarrierMethod {
    Bsp,
    Asp,
    Ssp,
    Probabilistic(InnerMethod),
}

impl BarrierMethod {
    /// Registry names accepted on the command line and in config files.
    pub const NAMES: [&'static str; 5] = ["bsp", "asp", "ssp", "pbsp", "pssp"];

    pub fn name(self) -> &'static str {
        match self {
            BarrierMethod::Bsp => "bsp",
            BarrierMethod::Asp => "asp",
            BarrierMethod::Ssp => "ssp",
            BarrierMethod::Probabilistic(InnerMethod::Bsp) => "pbsp",
            BarrierMethod::Probabilistic(InnerMethod::Ssp) => "pssp",
        }
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, BarrierMethod::Probabilistic(_))
    }

    /// Whether the admission decision needs the counters of the whole population.
    pub fn needs_global_state(self) -> bool {
        matches!(self, BarrierMethod::Bsp | BarrierMethod::Ssp)
    }
}

impl FromStr for BarrierMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "bsp" => BarrierMethod::Bsp,
            "asp" => BarrierMethod::Asp,
            "ssp" => BarrierMethod::Ssp,
            "pbsp" => BarrierMethod::Probabilistic(InnerMethod::Bsp),
            "pssp" => BarrierMethod::Probabilistic(InnerMethod::Ssp),
            other => {
                return Err(format!(
                    "unknown barrier method `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                ))
            }
        })
    }
}

impl TryFrom<String> for BarrierMethod {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BarrierMethod> for String {
    fn from(m: BarrierMethod) -> Self {
        m.name().to_owned()
    }
}

impl fmt::Display for BarrierMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy selector plus its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierPolicy {
    pub method: BarrierMethod,
    /// Used by SSP and probabilistic SSP.
    pub staleness: Staleness,
    /// Peers sampled per admission check. `None` means 1% of the initial population.
    pub sample_size: Option<usize>,
    /// Let a node draw itself as one of its samples.
    pub sample_include_self: bool,
}

impl Default for BarrierPolicy {
    fn default() -> Self {
        BarrierPolicy {
            method: BarrierMethod::Bsp,
            staleness: Staleness::Bounded(4),
            sample_size: None,
            sample_include_self: false,
        }
    }
}

impl BarrierPolicy {
    pub fn new(method: BarrierMethod) -> Self {
        BarrierPolicy {
            method,
            ..Default::default()
        }
    }

    pub fn bsp() -> Self {
        Self::new(BarrierMethod::Bsp)
    }

    pub fn asp() -> Self {
        Self::new(BarrierMethod::Asp)
    }

    pub fn ssp(staleness: Staleness) -> Self {
        BarrierPolicy {
            staleness,
            ..Self::new(BarrierMethod::Ssp)
        }
    }

    pub fn pbsp(sample_size: usize) -> Self {
        BarrierPolicy {
            sample_size: Some(sample_size),
            ..Self::new(BarrierMethod::Probabilistic(InnerMethod::Bsp))
        }
    }

    pub fn pssp(staleness: Staleness, sample_size: usize) -> Self {
        BarrierPolicy {
            staleness,
            sample_size: Some(sample_size),
            ..Self::new(BarrierMethod::Probabilistic(InnerMethod::Ssp))
        }
    }

    /// Sample size in effect for a population of `num_nodes`.
    pub fn effective_sample_size(&self, num_nodes: usize) -> usize {
        self.sample_size.unwrap_or_else(|| num_nodes.div_ceil(100))
    }

    /// Whether admissions are bounded by some rule. ASP and unbounded SSP are not.
    pub fn is_bounded(&self) -> bool {
        match self.method {
            BarrierMethod::Asp => false,
            BarrierMethod::Bsp | BarrierMethod::Probabilistic(InnerMethod::Bsp) => true,
            BarrierMethod::Ssp | BarrierMethod::Probabilistic(InnerMethod::Ssp) => {
                self.staleness != Staleness::Unbounded
            }
        }
    }

    /// The largest lag behind the viewed peers an admitted node may have.
    pub fn lag_bound(&self) -> Option<u64> {
        match self.method {
            BarrierMethod::Asp => None,
            BarrierMethod::Bsp | BarrierMethod::Probabilistic(InnerMethod::Bsp) => Some(0),
            BarrierMethod::Ssp | BarrierMethod::Probabilistic(InnerMethod::Ssp) => {
                match self.staleness {
                    Staleness::Bounded(s) => Some(s),
                    Staleness::Unbounded => None,
                }
            }
        }
    }

    /// Short label used for run directories, e.g. `pssp-s4-b10`.
    pub fn label(&self, num_nodes: usize) -> String {
        match self.method {
            BarrierMethod::Bsp | BarrierMethod::Asp => self.method.name().to_owned(),
            BarrierMethod::Ssp => format!("ssp-s{}", self.staleness),
            BarrierMethod::Probabilistic(InnerMethod::Bsp) => {
                format!("pbsp-b{}", self.effective_sample_size(num_nodes))
            }
            BarrierMethod::Probabilistic(InnerMethod::Ssp) => format!(
                "pssp-s{}-b{}",
                self.staleness,
                self.effective_sample_size(num_nodes)
            ),
        }
    }
}

/// Read-only access to a set of node counters.
pub trait CounterView {
    fn len(&self) -> usize;

    fn min_counter(&self) -> Option<u64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counters of a set of live nodes: the whole population, or a sample of it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateView {
    counters: BTreeMap<NodeId, u64>,
}

impl StateView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, counter: u64) {
        self.counters.insert(node, counter);
    }

    pub fn counters(&self) -> &BTreeMap<NodeId, u64> {
        &self.counters
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.counters.keys().copied()
    }
}

impl FromIterator<(NodeId, u64)> for StateView {
    fn from_iter<I: IntoIterator<Item = (NodeId, u64)>>(iter: I) -> Self {
        StateView {
            counters: iter.into_iter().collect(),
        }
    }
}

impl CounterView for StateView {
    fn len(&self) -> usize {
        self.counters.len()
    }

    fn min_counter(&self) -> Option<u64> {
        self.counters.values().copied().min()
    }
}

/// Lowest counter every viewed peer must have reached for a node with `self_counter`
/// completed iterations to proceed. `None` when nothing is required.
pub fn required_counter(self_counter: u64, lag_bound: Option<u64>) -> Option<u64> {
    lag_bound.map(|s| self_counter.saturating_sub(s))
}

/// BSP: proceed only if no viewed node is behind the caller.
pub fn bsp_may_advance(self_counter: u64, view: &impl CounterView) -> Result<bool> {
    let min = view.min_counter().ok_or(Error::EmptyView)?;
    Ok(min >= self_counter)
}

pub fn asp_may_advance() -> bool {
    true
}

/// SSP: proceed while the slowest viewed node is at most `staleness` iterations behind.
/// A lag of exactly `staleness` admits.
pub fn ssp_may_advance(self_counter: u64, view: &impl CounterView, staleness: Staleness) -> Result<bool> {
    let min = view.min_counter().ok_or(Error::EmptyView)?;
    Ok(match staleness {
        Staleness::Bounded(s) => self_counter.saturating_sub(min) <= s,
        Staleness::Unbounded => true,
    })
}

/// Draws `min(beta, |candidates|)` distinct peers uniformly from `population`.
///
/// `population` must be sorted. The sampling node is excluded from the candidates unless
/// `include_self` is set. No randomness is consumed when the sample is empty or covers
/// every candidate.
pub fn sample_peers<R: Rng + ?Sized>(
    population: &[NodeId],
    self_id: NodeId,
    beta: usize,
    include_self: bool,
    rng: &mut R,
) -> Vec<NodeId> {
    debug_assert!(population.windows(2).all(|w| w[0] < w[1]));
    let self_pos = if include_self {
        None
    } else {
        population.binary_search(&self_id).ok()
    };
    let candidates = population.len() - usize::from(self_pos.is_some());
    let amount = beta.min(candidates);
    let pick = |i: usize| match self_pos {
        Some(p) if i >= p => population[i + 1],
        _ => population[i],
    };
    if amount == 0 {
        return Vec::new();
    }
    if amount == candidates {
        return (0..candidates).map(pick).collect();
    }
    rand::seq::index::sample(rng, candidates, amount)
        .into_iter()
        .map(pick)
        .collect()
}

/// The sampling primitive: a fresh uniform peer sample together with the peers' counters.
pub fn psp_sample<R: Rng + ?Sized>(
    population: &[NodeId],
    self_id: NodeId,
    beta: usize,
    include_self: bool,
    counter_of: impl Fn(NodeId) -> u64,
    rng: &mut R,
) -> StateView {
    sample_peers(population, self_id, beta, include_self, rng)
        .into_iter()
        .map(|id| (id, counter_of(id)))
        .collect()
}

/// Where admission checks read node counters from.
pub trait ViewSource {
    /// Live node ids, sorted.
    fn live_nodes(&self) -> &[NodeId];

    fn counter_of(&self, node: NodeId) -> Option<u64>;

    /// Smallest counter among live nodes.
    fn global_min(&self) -> Option<u64>;
}

struct GlobalView<'a, S: ?Sized>(&'a S);

impl<S: ViewSource + ?Sized> CounterView for GlobalView<'_, S> {
    fn len(&self) -> usize {
        self.0.live_nodes().len()
    }

    fn min_counter(&self) -> Option<u64> {
        self.0.global_min()
    }
}

/// Outcome of an admission check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    /// Proceed. `lag` is the caller's counter minus the smallest viewed counter, `None`
    /// for an empty view or a method that views nothing.
    Admit { lag: Option<u64> },
    /// Wait until every live node has reached `required`.
    WaitGlobal { required: u64 },
    /// Wait until every listed peer has reached `required`. `sample` is the full view the
    /// decision was made on and `behind` the peers still short of `required`.
    WaitPeers {
        required: u64,
        sample: Vec<NodeId>,
        behind: Vec<NodeId>,
    },
}

impl Admission {
    pub fn admitted(&self) -> bool {
        matches!(self, Admission::Admit { .. })
    }
}

/// Full admission decision for a node with `self_counter` completed iterations.
pub fn evaluate<S, R>(
    policy: &BarrierPolicy,
    self_id: NodeId,
    self_counter: u64,
    beta: usize,
    source: &S,
    rng: &mut R,
) -> Result<Admission>
where
    S: ViewSource + ?Sized,
    R: Rng + ?Sized,
{
    let lag_of = |min: Option<u64>| min.map(|m| self_counter.saturating_sub(m));
    match policy.method {
        BarrierMethod::Asp => {
            debug_assert!(asp_may_advance());
            Ok(Admission::Admit { lag: None })
        }
        BarrierMethod::Bsp | BarrierMethod::Ssp => {
            let view = GlobalView(source);
            let ok = match policy.method {
                BarrierMethod::Bsp => bsp_may_advance(self_counter, &view)?,
                _ => ssp_may_advance(self_counter, &view, policy.staleness)?,
            };
            if ok {
                Ok(Admission::Admit {
                    lag: lag_of(view.min_counter()),
                })
            } else {
                let required = required_counter(self_counter, policy.lag_bound())
                    .expect("a refused admission has a bound");
                Ok(Admission::WaitGlobal { required })
            }
        }
        BarrierMethod::Probabilistic(inner) => {
            let view = psp_sample(
                source.live_nodes(),
                self_id,
                beta,
                policy.sample_include_self,
                |id| source.counter_of(id).expect("sampled node is live"),
                rng,
            );
            if view.is_empty() {
                return Ok(Admission::Admit { lag: None });
            }
            let ok = match inner {
                InnerMethod::Bsp => bsp_may_advance(self_counter, &view)?,
                InnerMethod::Ssp => ssp_may_advance(self_counter, &view, policy.staleness)?,
            };
            if ok {
                return Ok(Admission::Admit {
                    lag: lag_of(view.min_counter()),
                });
            }
            let required = required_counter(self_counter, policy.lag_bound())
                .expect("a refused admission has a bound");
            let behind = view
                .counters()
                .iter()
                .filter(|&(_, &c)| c < required)
                .map(|(&id, _)| id)
                .collect();
            Ok(Admission::WaitPeers {
                required,
                sample: view.nodes().collect(),
                behind,
            })
        }
    }
}

/// Boolean form of [`evaluate`].
pub fn may_advance<S, R>(
    policy: &BarrierPolicy,
    self_id: NodeId,
    self_counter: u64,
    beta: usize,
    source: &S,
    rng: &mut R,
) -> Result<bool>
where
    S: ViewSource + ?Sized,
    R: Rng + ?Sized,
{
    Ok(evaluate(policy, self_id, self_counter, beta, source, rng)?.admitted())
}
