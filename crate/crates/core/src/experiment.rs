//! Pipelines of unitary and measurement stages, evaluated exactly by branch
//! enumeration or by seeded shot sampling.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use thiserror::Error;

use crate::components::{
    self, detector_projectors, ComponentError, EraserKrausPair, DIRECTION, ERASER, PHOTON,
};
use crate::hilbert::{self, embed, projector, HilbertError, LinearMap, SpaceSpec, StateVector, NORM_TOL};

/// Branches whose probability falls below this are dropped instead of renormalized.
pub const PRUNE_THRESHOLD: f64 = 1e-14;
/// Tolerance used when comparing two outcome distributions.
pub const DISTRIBUTION_TOL: f64 = 1e-12;

pub const KEY_WHICH_WAY: &str = "ww";
pub const KEY_ABSORBED: &str = "abs";
pub const KEY_DETECTOR: &str = "detector";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("conditioning event `{0}` has zero probability")]
    ZeroProbabilityCondition(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid value {0} is not finite")]
    NonFiniteGrid(f64),
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("malformed predicate `{0}`")]
    BadPredicate(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Component(#[from] ComponentError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// One step of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// A unitary acting on the named subsystems, in order.
    Unitary { map: LinearMap, targets: Vec<String> },
    /// Projective measurement of one subsystem; `outcomes[i]` names the record
    /// label reported for the subsystem's i-th basis label.
    ProjectiveMeasure { subsystem: String, key: String, outcomes: Vec<String> },
    /// Two-outcome absorption measurement (`yes` for `k_abs`, `no` for `k_noabs`).
    GeneralizedMeasure { kraus: EraserKrausPair, targets: Vec<String>, key: String },
    /// Final detectors `D_X` / `D_Y` on the direction subsystem.
    Detect { key: String },
}

impl Stage {
    pub fn unitary(map: LinearMap, targets: &[&str]) -> Self {
        Stage::Unitary { map, targets: targets.iter().map(|s| s.to_string()).collect() }
    }

    /// Direction-only unitary, the common case for optical elements.
    pub fn optical(map: LinearMap) -> Self {
        Self::unitary(map, &[DIRECTION])
    }

    pub fn which_way_readout() -> Self {
        Stage::ProjectiveMeasure {
            subsystem: DIRECTION.into(),
            key: KEY_WHICH_WAY.into(),
            outcomes: vec!["A".into(), "B".into()],
        }
    }

    pub fn eraser(kraus: EraserKrausPair) -> Self {
        Stage::GeneralizedMeasure {
            kraus,
            targets: vec![PHOTON.into(), ERASER.into()],
            key: KEY_ABSORBED.into(),
        }
    }

    pub fn detect() -> Self {
        Stage::Detect { key: KEY_DETECTOR.into() }
    }

    fn record_key(&self) -> Option<&str> {
        match self {
            Stage::Unitary { .. } => None,
            Stage::ProjectiveMeasure { key, .. } | Stage::GeneralizedMeasure { key, .. } | Stage::Detect { key } => {
                Some(key)
            }
        }
    }
}

/// A stage lifted to the full space.
#[derive(Debug, Clone)]
enum Step {
    Unitary(LinearMap),
    Measure { key: String, outcomes: Vec<(String, LinearMap)> },
}

fn target_refs(targets: &[String]) -> Vec<&str> {
    targets.iter().map(String::as_str).collect()
}

fn lower(space: &SpaceSpec, stage: &Stage) -> Result<Step> {
    Ok(match stage {
        Stage::Unitary { map, targets } => {
            if !map.is_unitary() {
                return Err(ExperimentError::InvalidPipeline("unitary stage holds a non-unitary map".into()));
            }
            Step::Unitary(embed(map, &target_refs(targets), space)?)
        }
        Stage::ProjectiveMeasure { subsystem, key, outcomes } => {
            let sub = space.subsystem(subsystem)?;
            if outcomes.len() != sub.dim() {
                return Err(ExperimentError::InvalidPipeline(format!(
                    "measurement of `{subsystem}` names {} outcomes for {} basis labels",
                    outcomes.len(),
                    sub.dim()
                )));
            }
            let ops = sub
                .labels()
                .iter()
                .zip(outcomes)
                .map(|(label, name)| Ok((name.clone(), projector(space, subsystem, label)?)))
                .collect::<Result<Vec<_>>>()?;
            Step::Measure { key: key.clone(), outcomes: ops }
        }
        Stage::GeneralizedMeasure { kraus, targets, key } => {
            let t = target_refs(targets);
            Step::Measure {
                key: key.clone(),
                outcomes: vec![
                    ("yes".into(), embed(&kraus.k_abs, &t, space)?),
                    ("no".into(), embed(&kraus.k_noabs, &t, space)?),
                ],
            }
        }
        Stage::Detect { key } => {
            let (px, py) = detector_projectors(space)?;
            Step::Measure { key: key.clone(), outcomes: vec![("X".into(), px), ("Y".into(), py)] }
        }
    })
}

/// A validated experiment: initial state plus stages ending in a single `Detect`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    space: SpaceSpec,
    initial: StateVector,
    stages: Vec<Stage>,
    steps: Vec<Step>,
}

impl Pipeline {
    pub fn new(space: SpaceSpec, initial: StateVector, stages: Vec<Stage>) -> Result<Self> {
        if initial.space() != &space {
            return Err(ExperimentError::InvalidPipeline("initial state lives on a different space".into()));
        }
        if (initial.norm() - 1.0).abs() > NORM_TOL {
            return Err(ExperimentError::InvalidPipeline("initial state is not normalized".into()));
        }
        let detects = stages.iter().filter(|s| matches!(s, Stage::Detect { .. })).count();
        if detects != 1 || !matches!(stages.last(), Some(Stage::Detect { .. })) {
            return Err(ExperimentError::InvalidPipeline("detect must appear exactly once, as the last stage".into()));
        }
        let mut keys: Vec<&str> = Vec::new();
        for key in stages.iter().filter_map(Stage::record_key) {
            if keys.contains(&key) {
                return Err(ExperimentError::InvalidPipeline(format!("record key `{key}` used twice")));
            }
            keys.push(key);
        }
        let steps = stages.iter().map(|s| lower(&space, s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { space, initial, stages, steps })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Same stages from a different initial state.
    pub fn with_initial(&self, initial: StateVector) -> Result<Self> {
        Self::new(self.space.clone(), initial, self.stages.clone())
    }
}

/// Ordered `key → label` outcome record of one branch.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Record(Vec<(String, String)>);

impl Record {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.0
    }

    fn pushed(&self, key: &str, label: &str) -> Self {
        let mut r = self.clone();
        r.0.push((key.to_string(), label.to_string()));
        r
    }

    /// Key-sorted copy, for order-insensitive comparison.
    pub fn canonical(&self) -> Record {
        let mut r = self.clone();
        r.0.sort();
        r
    }
}

impl FromIterator<(String, String)> for Record {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Record(iter.into_iter().collect())
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Conjunction of `key=label` clauses over a [`Record`]. The empty predicate is always true.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Predicate(Vec<(String, String)>);

impl Predicate {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn eq(key: &str, label: &str) -> Self {
        Predicate(vec![(key.into(), label.into())])
    }

    pub fn and(mut self, key: &str, label: &str) -> Self {
        self.0.push((key.into(), label.into()));
        self
    }

    /// Parses `k=v[,k=v...]`.
    pub fn parse(src: &str) -> Result<Self> {
        let bad = || ExperimentError::BadPredicate(src.to_string());
        let mut clauses = Vec::new();
        for part in src.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let (k, v) = (k.trim(), v.trim());
            let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ident(k) || !ident(v) {
                return Err(bad());
            }
            clauses.push((k.to_string(), v.to_string()));
        }
        Ok(Predicate(clauses))
    }

    pub fn clauses(&self) -> &[(String, String)] {
        &self.0
    }

    pub fn matches(&self, record: &Record) -> bool {
        self.0.iter().all(|(k, v)| record.get(k) == Some(v.as_str()))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub record: Record,
    pub prob: f64,
    pub state: StateVector,
}

/// Terminal branches of a pipeline with their probabilities and residual states.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub branches: Vec<Branch>,
    pub prune_threshold: f64,
}

impl OutcomeDistribution {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.prob).sum()
    }

    pub fn find(&self, pred: &Predicate) -> Option<&Branch> {
        self.branches.iter().find(|b| pred.matches(&b.record))
    }

    /// Probabilities keyed by canonical (key-sorted) record.
    fn canonical_probs(&self) -> BTreeMap<Record, f64> {
        let mut m = BTreeMap::new();
        for b in &self.branches {
            *m.entry(b.record.canonical()).or_insert(0.0) += b.prob;
        }
        m
    }

    /// Same joint records with probabilities within `tol`, ignoring record key order.
    /// A record missing on one side counts as probability zero.
    pub fn matches(&self, other: &OutcomeDistribution, tol: f64) -> bool {
        let (a, b) = (self.canonical_probs(), other.canonical_probs());
        a.keys()
            .chain(b.keys())
            .all(|r| (a.get(r).copied().unwrap_or(0.0) - b.get(r).copied().unwrap_or(0.0)).abs() <= tol)
    }
}

/// Node of the measurement tree: the state reached and the measurement that follows it.
#[derive(Debug, Clone)]
struct Node {
    state: StateVector,
    split: Option<Split>,
}

#[derive(Debug, Clone)]
struct Split {
    key: String,
    /// `(label, conditional probability, child)` for every unpruned outcome.
    children: Vec<(String, f64, Node)>,
}

fn grow(state: StateVector, steps: &[Step], reach: f64) -> Result<Node> {
    let mut state = state;
    for (i, step) in steps.iter().enumerate() {
        match step {
            Step::Unitary(u) => state = hilbert::apply(u, &state)?,
            Step::Measure { key, outcomes } => {
                let mut children = Vec::with_capacity(outcomes.len());
                for (label, k) in outcomes {
                    let residual = hilbert::apply(k, &state)?;
                    let p = residual.norm_sqr();
                    if reach * p < PRUNE_THRESHOLD {
                        continue;
                    }
                    let child = grow(residual.normalized()?, &steps[i + 1..], reach * p)?;
                    children.push((label.clone(), p, child));
                }
                return Ok(Node { state, split: Some(Split { key: key.clone(), children }) });
            }
        }
    }
    Ok(Node { state, split: None })
}

fn collect_leaves(node: &Node, record: Record, prob: f64, out: &mut Vec<Branch>) {
    match &node.split {
        None => out.push(Branch { record, prob, state: node.state.clone() }),
        Some(split) => {
            for (label, p, child) in &split.children {
                collect_leaves(child, record.pushed(&split.key, label), prob * p, out);
            }
        }
    }
}

fn enumerate(initial: &StateVector, steps: &[Step]) -> Result<OutcomeDistribution> {
    let root = grow(initial.clone(), steps, 1.0)?;
    let mut branches = Vec::new();
    collect_leaves(&root, Record::default(), 1.0, &mut branches);
    Ok(OutcomeDistribution { branches, prune_threshold: PRUNE_THRESHOLD })
}

/// Exact depth-first enumeration of every measurement branch.
pub fn run_analytic(p: &Pipeline) -> Result<OutcomeDistribution> {
    enumerate(&p.initial, &p.steps)
}

/// Total probability of the branches satisfying `of`.
pub fn marginal(d: &OutcomeDistribution, of: &Predicate) -> f64 {
    // an empty f64 sum is -0.0
    d.branches.iter().filter(|b| of.matches(&b.record)).map(|b| b.prob).sum::<f64>() + 0.0
}

/// `Prob{of | given}`; errors when `given` has zero probability.
pub fn conditional(d: &OutcomeDistribution, given: &Predicate, of: &Predicate) -> Result<f64> {
    let denom = marginal(d, given);
    if denom <= 0.0 {
        return Err(ExperimentError::ZeroProbabilityCondition(given.to_string()));
    }
    let joint = d
        .branches
        .iter()
        .filter(|b| given.matches(&b.record) && of.matches(&b.record))
        .map(|b| b.prob)
        .sum::<f64>()
        + 0.0;
    Ok(joint / denom)
}

/// Per-shot random source.
///
/// Shot `n` of a run with seed `s` draws from ChaCha20 keyed with the
/// little-endian bytes of `s` (zero-padded to 32 bytes), stream id `n`, starting
/// at block 0. Each uniform draw takes the top 53 bits of one `next_u64`.
/// Shot outcomes therefore depend only on `(seed, shot index)`.
pub struct ShotRng(ChaCha20Rng);

impl ShotRng {
    pub fn new(seed: u64, shot: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(shot);
        Self(rng)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Empirical record counts of a sampled run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotHistogram {
    pub shots: u64,
    pub seed: u64,
    pub counts: BTreeMap<Record, u64>,
}

impl ShotHistogram {
    pub fn count(&self, pred: &Predicate) -> u64 {
        self.counts.iter().filter(|(r, _)| pred.matches(r)).map(|(_, n)| n).sum()
    }

    pub fn frequency(&self, pred: &Predicate) -> f64 {
        self.count(pred) as f64 / self.shots as f64
    }

    /// Empirical `freq{of | given}`.
    pub fn conditional_frequency(&self, given: &Predicate, of: &Predicate) -> Result<f64> {
        let denom = self.count(given);
        if denom == 0 {
            return Err(ExperimentError::ZeroProbabilityCondition(given.to_string()));
        }
        let joint: u64 = self
            .counts
            .iter()
            .filter(|(r, _)| given.matches(r) && of.matches(r))
            .map(|(_, n)| n)
            .sum();
        Ok(joint as f64 / denom as f64)
    }
}

fn sample_path(root: &Node, rng: &mut ShotRng) -> Record {
    let mut record = Record::default();
    let mut node = root;
    while let Some(split) = &node.split {
        let Some(last) = split.children.len().checked_sub(1) else {
            break;
        };
        let draw = rng.uniform();
        let mut acc = 0.0;
        let mut pick = last;
        for (i, (_, p, _)) in split.children.iter().enumerate() {
            acc += p;
            if draw < acc {
                pick = i;
                break;
            }
        }
        let (label, _, child) = &split.children[pick];
        record.0.push((split.key.clone(), label.clone()));
        node = child;
    }
    record
}

/// Outcome record of a single shot.
pub fn sample_shot(p: &Pipeline, seed: u64, shot: u64) -> Result<Record> {
    let root = grow(p.initial.clone(), &p.steps, 1.0)?;
    Ok(sample_path(&root, &mut ShotRng::new(seed, shot)))
}

/// Monte Carlo run: each shot walks the measurement tree, drawing every outcome
/// from its conditional branch probabilities.
pub fn run_sampled(p: &Pipeline, shots: u64, seed: u64) -> Result<ShotHistogram> {
    if shots == 0 {
        return Err(ExperimentError::NoShots);
    }
    let root = grow(p.initial.clone(), &p.steps, 1.0)?;
    let mut counts = BTreeMap::new();
    for shot in 0..shots {
        let record = sample_path(&root, &mut ShotRng::new(seed, shot));
        *counts.entry(record).or_insert(0) += 1;
    }
    Ok(ShotHistogram { shots, seed, counts })
}

/// [`run_sampled`] split over `threads` scoped threads; the histogram is
/// identical to the sequential one because shot `n` only depends on `(seed, n)`.
pub fn run_sampled_concurrent(p: &Pipeline, shots: u64, seed: u64, threads: usize) -> Result<ShotHistogram> {
    if shots == 0 {
        return Err(ExperimentError::NoShots);
    }
    let root = grow(p.initial.clone(), &p.steps, 1.0)?;
    let threads = threads.max(1) as u64;
    let chunk = shots.div_ceil(threads);
    let partials: Vec<BTreeMap<Record, u64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let root = &root;
                scope.spawn(move || {
                    let mut counts = BTreeMap::new();
                    for shot in (t * chunk)..((t + 1) * chunk).min(shots) {
                        *counts.entry(sample_path(root, &mut ShotRng::new(seed, shot))).or_insert(0) += 1;
                    }
                    counts
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    let mut counts = BTreeMap::new();
    for part in partials {
        for (r, n) in part {
            *counts.entry(r).or_insert(0) += n;
        }
    }
    Ok(ShotHistogram { shots, seed, counts })
}

/// Fringe contrast `(max − min)/(max + min)`; zero when both vanish.
pub fn visibility(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max + min <= 0.0 {
        0.0
    } else {
        (max - min) / (max + min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub prob_x: f64,
    pub prob_y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: String,
    pub given: Option<String>,
    pub points: Vec<SweepPoint>,
    /// Contrast of `Prob{X}`, or of `Prob{X | given}` when conditioned.
    pub visibility: f64,
}

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Evaluates `template` at every grid value and extracts the fringe visibility.
pub fn sweep<F>(parameter: &str, grid: &[f64], template: F, given: Option<&Predicate>) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<Pipeline>,
{
    if grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|v| !v.is_finite()) {
        return Err(ExperimentError::NonFiniteGrid(bad));
    }
    let x = Predicate::eq(KEY_DETECTOR, "X");
    let y = Predicate::eq(KEY_DETECTOR, "Y");
    let mut points = Vec::with_capacity(grid.len());
    for &value in grid {
        let d = run_analytic(&template(value)?)?;
        let (cond_x, cond_y) = match given {
            Some(g) => (Some(conditional(&d, g, &x)?), Some(conditional(&d, g, &y)?)),
            None => (None, None),
        };
        points.push(SweepPoint { value, prob_x: marginal(&d, &x), prob_y: marginal(&d, &y), cond_x, cond_y });
    }
    let fringe: Vec<f64> = points.iter().map(|p| p.cond_x.unwrap_or(p.prob_x)).collect();
    Ok(SweepResult {
        parameter: parameter.to_string(),
        given: given.map(ToString::to_string),
        points,
        visibility: visibility(&fringe),
    })
}

/// Runs `p` and the variant whose photon⊗eraser measurement is moved after
/// `Detect`, and reports whether the joint distributions agree within
/// [`DISTRIBUTION_TOL`].
pub fn delayed_choice_equivalence(p: &Pipeline) -> Result<bool> {
    let gm = p
        .stages
        .iter()
        .position(|s| match s {
            Stage::GeneralizedMeasure { targets, .. } => {
                let mut t = target_refs(targets);
                t.sort_unstable();
                t == [ERASER, PHOTON]
            }
            _ => false,
        })
        .ok_or_else(|| ExperimentError::Precondition("pipeline has no photon⊗eraser measurement".into()))?;
    let detect = p
        .stages
        .iter()
        .position(|s| matches!(s, Stage::Detect { .. }))
        .filter(|&d| d > gm)
        .ok_or_else(|| ExperimentError::Precondition("no detect stage after the eraser".into()))?;

    let mut moved = p.stages.clone();
    let stage = moved.remove(gm);
    moved.insert(detect, stage);
    let steps = moved.iter().map(|s| lower(&p.space, s)).collect::<Result<Vec<_>>>()?;
    let late = enumerate(&p.initial, &steps)?;
    let early = run_analytic(p)?;
    Ok(early.matches(&late, DISTRIBUTION_TOL))
}

/// Canonical initial state `|x⟩ ⊗ |vac⟩ ⊗ |e⟩ ⊗ |γ⟩` restricted to the subsystems present in `space`,
/// with the particle entering along `source`.
pub fn canonical_initial(space: &SpaceSpec, source: components::Path) -> Result<StateVector> {
    let labels: Vec<&str> = space
        .subsystems()
        .iter()
        .map(|s| match s.name() {
            DIRECTION => Ok(source.direction_label()),
            PHOTON => Ok("vac"),
            components::ATOM => Ok("e"),
            ERASER => Ok("gamma"),
            other => Err(ExperimentError::InvalidPipeline(format!("no canonical initial label for `{other}`"))),
        })
        .collect::<Result<_>>()?;
    Ok(StateVector::basis(space.clone(), &labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{beam_splitter, eraser_kraus, mirror_pair, phase_shifter, which_way_entangler, Path, ATOM};
    use crate::hilbert::{SubsystemSpec, Amplitude};

    fn space(names: &[SubsystemSpec]) -> SpaceSpec {
        SpaceSpec::new(names.to_vec()).unwrap()
    }

    fn baseline() -> Pipeline {
        let s = space(&[SubsystemSpec::direction()]);
        let init = canonical_initial(&s, Path::A).unwrap();
        Pipeline::new(
            s,
            init,
            vec![Stage::optical(beam_splitter()), Stage::optical(mirror_pair()), Stage::optical(beam_splitter()), Stage::detect()],
        )
        .unwrap()
    }

    fn eraser_pipeline(eta: f64, open: bool) -> Pipeline {
        let s = space(&[SubsystemSpec::direction(), SubsystemSpec::photon(), SubsystemSpec::atom(), SubsystemSpec::eraser()]);
        let init = canonical_initial(&s, Path::A).unwrap();
        let mut stages = vec![
            Stage::optical(beam_splitter()),
            Stage::unitary(which_way_entangler(), &[DIRECTION, PHOTON, ATOM]),
            Stage::optical(mirror_pair()),
            Stage::optical(beam_splitter()),
        ];
        if open {
            stages.push(Stage::eraser(eraser_kraus(eta).unwrap()));
        }
        stages.push(Stage::detect());
        Pipeline::new(s, init, stages).unwrap()
    }

    #[test]
    fn baseline_is_deterministic() {
        let d = run_analytic(&baseline()).unwrap();
        assert_eq!(d.branches.len(), 1);
        assert_eq!(d.branches[0].record.get(KEY_DETECTOR), Some("X"));
        assert!((d.branches[0].prob - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pipeline_validation() {
        let s = space(&[SubsystemSpec::direction()]);
        let init = canonical_initial(&s, Path::A).unwrap();
        let no_detect = Pipeline::new(s.clone(), init.clone(), vec![Stage::optical(beam_splitter())]);
        assert!(matches!(no_detect, Err(ExperimentError::InvalidPipeline(_))));
        let detect_first = Pipeline::new(s.clone(), init.clone(), vec![Stage::detect(), Stage::optical(beam_splitter())]);
        assert!(matches!(detect_first, Err(ExperimentError::InvalidPipeline(_))));
        let bad_target = Pipeline::new(s.clone(), init.clone(), vec![Stage::unitary(beam_splitter(), &["photon"]), Stage::detect()]);
        assert!(matches!(bad_target, Err(ExperimentError::Hilbert(HilbertError::UnknownSubsystem(_)))));
        let half = init.scaled(Amplitude::new(0.5, 0.0));
        assert!(Pipeline::new(s, half, vec![Stage::detect()]).is_err());
    }

    #[test]
    fn eraser_branch_table() {
        let d = run_analytic(&eraser_pipeline(1.0, true)).unwrap();
        assert_eq!(d.branches.len(), 2);
        let abs_x = d.find(&Predicate::eq(KEY_ABSORBED, "yes").and(KEY_DETECTOR, "X")).unwrap();
        let noabs_y = d.find(&Predicate::eq(KEY_ABSORBED, "no").and(KEY_DETECTOR, "Y")).unwrap();
        assert!((abs_x.prob - 0.5).abs() < 1e-12);
        assert!((noabs_y.prob - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditional_errors_on_null_event() {
        let d = run_analytic(&baseline()).unwrap();
        let r = conditional(&d, &Predicate::eq(KEY_DETECTOR, "Y"), &Predicate::always());
        assert!(matches!(r, Err(ExperimentError::ZeroProbabilityCondition(_))));
        assert!((marginal(&d, &Predicate::always()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predicate_parsing() {
        let p = Predicate::parse("abs=yes,detector=X").unwrap();
        assert_eq!(p.clauses().len(), 2);
        assert_eq!(p.to_string(), "abs=yes,detector=X");
        for bad in ["", "abs", "abs=", "=yes", "a b=c"] {
            assert!(Predicate::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn visibility_edge_cases() {
        assert_eq!(visibility(&[0.0, 0.0]), 0.0);
        assert_eq!(visibility(&[0.5, 0.5]), 0.0);
        assert_eq!(visibility(&[0.0, 1.0]), 1.0);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let t = |_: f64| Ok(baseline());
        assert_eq!(sweep("phi", &[], t, None), Err(ExperimentError::EmptyGrid));
        assert!(matches!(sweep("phi", &[0.0, f64::NAN], t, None), Err(ExperimentError::NonFiniteGrid(_))));
    }

    #[test]
    fn phase_sweep_on_baseline() {
        let template = |phi: f64| {
            let s = space(&[SubsystemSpec::direction()]);
            let init = canonical_initial(&s, Path::A)?;
            Pipeline::new(
                s,
                init,
                vec![
                    Stage::optical(beam_splitter()),
                    Stage::optical(phase_shifter(phi, Path::B)?),
                    Stage::optical(mirror_pair()),
                    Stage::optical(beam_splitter()),
                    Stage::detect(),
                ],
            )
        };
        let grid: Vec<f64> = (0..8).map(|k| k as f64 * std::f64::consts::PI / 4.0).collect();
        let r = sweep("phi", &grid, template, None).unwrap();
        assert!((r.visibility - 1.0).abs() < 1e-10);
    }

    #[test]
    fn delayed_choice_precondition() {
        assert!(matches!(delayed_choice_equivalence(&baseline()), Err(ExperimentError::Precondition(_))));
        assert!(delayed_choice_equivalence(&eraser_pipeline(0.5, true)).unwrap());
    }

    #[test]
    fn sampler_is_reproducible() {
        let p = eraser_pipeline(1.0, true);
        let a = run_sampled(&p, 1, 99).unwrap();
        let b = run_sampled(&p, 1, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(run_sampled(&p, 0, 1), Err(ExperimentError::NoShots));
        let shot = sample_shot(&p, 99, 0).unwrap();
        assert_eq!(a.counts.get(&shot), Some(&1));
    }

    #[test]
    fn shot_rng_streams_differ() {
        let mut r0 = ShotRng::new(1, 0);
        let a: Vec<f64> = (0..4).map(|_| r0.uniform()).collect();
        let mut again = ShotRng::new(1, 0);
        assert_eq!(a[0], again.uniform());
        assert_ne!(a[0], ShotRng::new(1, 1).uniform());
        assert_ne!(a[0], ShotRng::new(2, 0).uniform());
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
    }
}
