//! Dense state vectors and linear maps over a composite tensor-product basis.
//!
//! A [`SpaceSpec`] is an ordered list of named subsystems. Basis index `i` of the
//! composite space is the mixed-radix number formed by the subsystem label
//! indices, with the last subsystem varying fastest. Every other module relies
//! on that convention, so `kron`, `embed` and `projector` all reduce to radix
//! arithmetic over it.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Complex amplitude.
pub type Amplitude = Complex64;

/// Maximum deviation of `M†M` from the identity tolerated for maps flagged unitary.
pub const UNITARY_TOL: f64 = 1e-10;
/// Maximum deviation of `‖ψ‖` from one for a state tagged normalized.
pub const NORM_TOL: f64 = 1e-10;
/// Tolerance used when asserting exact probabilities.
pub const PROB_TOL: f64 = 1e-12;
/// Default tolerance of [`equal_up_to_global_phase`].
pub const PHASE_TOL: f64 = 1e-10;
/// Largest composite dimension accepted by any constructor.
pub const MAX_DIM: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HilbertError {
    #[error("subsystem `{0}` needs at least two basis labels")]
    TooFewLabels(String),
    #[error("duplicate basis label `{label}` in subsystem `{subsystem}`")]
    DuplicateLabel { subsystem: String, label: String },
    #[error("duplicate subsystem name `{0}`")]
    DuplicateSubsystem(String),
    #[error("a space needs at least one subsystem")]
    EmptySpace,
    #[error("composite dimension exceeds {MAX_DIM}")]
    DimensionOverflow,
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("unknown label `{label}` in subsystem `{subsystem}`")]
    UnknownLabel { subsystem: String, label: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operands live on different spaces")]
    SpaceMismatch,
    #[error("non-finite amplitude at index {0}")]
    NonFinite(usize),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("matrix is not unitary (max |M†M - I| = {0:e})")]
    NotUnitary(f64),
    #[error("embedding targets do not match the operator's subsystems")]
    TargetMismatch,
}

pub type Result<T> = std::result::Result<T, HilbertError>;

/// A single tensor factor: a name and its ordered basis labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsystemSpec {
    name: String,
    labels: Vec<String>,
}

impl SubsystemSpec {
    pub fn new<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let name = name.into();
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(HilbertError::TooFewLabels(name));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(HilbertError::DuplicateLabel { subsystem: name, label: l.clone() });
            }
        }
        Ok(Self { name, labels })
    }

    /// Propagation direction `{x, y}` of the interfering particle.
    pub fn direction() -> Self {
        Self::canonical("direction", &["x", "y"])
    }

    /// Emitted photon: absent, or in detector A or B.
    pub fn photon() -> Self {
        Self::canonical("photon", &["vac", "A", "B"])
    }

    /// Internal state of the interfering particle: excited or ground.
    pub fn atom() -> Self {
        Self::canonical("atom", &["e", "g"])
    }

    /// Eraser atom: ground `gamma` or excited `epsilon`.
    pub fn eraser() -> Self {
        Self::canonical("eraser", &["gamma", "epsilon"])
    }

    fn canonical(name: &str, labels: &[&str]) -> Self {
        Self { name: name.to_string(), labels: labels.iter().map(|s| s.to_string()).collect() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| HilbertError::UnknownLabel {
            subsystem: self.name.clone(),
            label: label.to_string(),
        })
    }
}

/// Ordered list of subsystems defining the composite basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    subsystems: Vec<SubsystemSpec>,
    total_dim: usize,
}

impl SpaceSpec {
    pub fn new(subsystems: Vec<SubsystemSpec>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(HilbertError::EmptySpace);
        }
        let mut total_dim: usize = 1;
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|o| o.name == s.name) {
                return Err(HilbertError::DuplicateSubsystem(s.name.clone()));
            }
            total_dim = total_dim
                .checked_mul(s.dim())
                .filter(|&d| d <= MAX_DIM)
                .ok_or(HilbertError::DimensionOverflow)?;
        }
        Ok(Self { subsystems, total_dim })
    }

    pub fn single(sub: SubsystemSpec) -> Self {
        let total_dim = sub.dim();
        Self { subsystems: vec![sub], total_dim }
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &SpaceSpec) -> Result<Self> {
        let mut subs = self.subsystems.clone();
        subs.extend(other.subsystems.iter().cloned());
        Self::new(subs)
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| HilbertError::UnknownSubsystem(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.subsystems.iter().any(|s| s.name == name)
    }

    pub fn subsystem(&self, name: &str) -> Result<&SubsystemSpec> {
        Ok(&self.subsystems[self.position(name)?])
    }

    /// Sub-space made of the named subsystems, in the order given.
    pub fn restrict(&self, names: &[&str]) -> Result<SpaceSpec> {
        let subs = names
            .iter()
            .map(|n| self.subsystem(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        SpaceSpec::new(subs)
    }

    /// Per-subsystem label indices of a basis index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.subsystems.len()];
        for (slot, s) in digits.iter_mut().zip(&self.subsystems).rev() {
            *slot = index % s.dim();
            index /= s.dim();
        }
        digits
    }

    pub fn index_from_digits(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.subsystems)
            .fold(0, |acc, (&d, s)| acc * s.dim() + d)
    }

    /// Basis index of a full label tuple given in subsystem order.
    pub fn index_of(&self, labels: &[&str]) -> Result<usize> {
        if labels.len() != self.subsystems.len() {
            return Err(HilbertError::DimensionMismatch { expected: self.subsystems.len(), got: labels.len() });
        }
        let digits = labels
            .iter()
            .zip(&self.subsystems)
            .map(|(l, s)| s.label_index(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.index_from_digits(&digits))
    }

    pub fn labels_of(&self, index: usize) -> Vec<&str> {
        self.digits(index)
            .into_iter()
            .zip(&self.subsystems)
            .map(|(d, s)| s.labels[d].as_str())
            .collect()
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.subsystems.iter().map(|s| s.name.as_str()).collect();
        write!(f, "{}", names.join("⊗"))
    }
}

fn check_finite(values: &[Amplitude]) -> Result<()> {
    match values.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
        Some(i) => Err(HilbertError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Amplitude vector over a [`SpaceSpec`].
///
/// States built from user input must be normalized; branch residuals produced
/// by measurement operators carry the `unnormalized` tag until
/// [`StateVector::normalized`] is called on them.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: SpaceSpec,
    amps: Vec<Amplitude>,
    normalized: bool,
}

impl StateVector {
    /// Normalized state from raw amplitudes. Rejects rather than rescales.
    pub fn new(space: SpaceSpec, amps: Vec<Amplitude>) -> Result<Self> {
        let s = Self::unnormalized(space, amps)?;
        let n = s.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(HilbertError::NotNormalized(n));
        }
        Ok(Self { normalized: true, ..s })
    }

    pub fn unnormalized(space: SpaceSpec, amps: Vec<Amplitude>) -> Result<Self> {
        if amps.len() != space.total_dim() {
            return Err(HilbertError::DimensionMismatch { expected: space.total_dim(), got: amps.len() });
        }
        check_finite(&amps)?;
        Ok(Self { space, amps, normalized: false })
    }

    /// Computational basis state for a full label tuple.
    pub fn basis(space: SpaceSpec, labels: &[&str]) -> Result<Self> {
        let idx = space.index_of(labels)?;
        let mut amps = vec![Amplitude::new(0.0, 0.0); space.total_dim()];
        amps[idx] = Amplitude::new(1.0, 0.0);
        Ok(Self { space, amps, normalized: true })
    }

    /// Tensor product of the factors, in order.
    pub fn product(factors: &[StateVector]) -> Result<Self> {
        let (first, rest) = factors.split_first().ok_or(HilbertError::EmptySpace)?;
        let mut acc = first.clone();
        for f in rest {
            let space = acc.space.concat(&f.space)?;
            let amps = acc
                .amps
                .iter()
                .flat_map(|a| f.amps.iter().map(move |b| a * b))
                .collect();
            acc = StateVector { space, amps, normalized: acc.normalized && f.normalized };
        }
        Ok(acc)
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amplitude(&self, labels: &[&str]) -> Result<Amplitude> {
        Ok(self.amps[self.space.index_of(labels)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescaled copy with unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(HilbertError::ZeroNorm);
        }
        let amps = self.amps.iter().map(|a| a / n).collect();
        Ok(Self { space: self.space.clone(), amps, normalized: true })
    }

    /// Multiplies every amplitude by `factor`; the tag is kept only for unit-modulus factors.
    pub fn scaled(&self, factor: Amplitude) -> Self {
        let keeps_norm = (factor.norm() - 1.0).abs() <= NORM_TOL;
        Self {
            space: self.space.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
            normalized: self.normalized && keeps_norm,
        }
    }

    /// Largest entry-wise modulus difference to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Square matrix over a [`SpaceSpec`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    space: SpaceSpec,
    entries: Vec<Amplitude>,
    unitary: bool,
}

impl LinearMap {
    /// General (not necessarily unitary) map from row-major entries.
    pub fn new(space: SpaceSpec, entries: Vec<Amplitude>) -> Result<Self> {
        let d = space.total_dim();
        if entries.len() != d * d {
            return Err(HilbertError::DimensionMismatch { expected: d * d, got: entries.len() });
        }
        check_finite(&entries)?;
        Ok(Self { space, entries, unitary: false })
    }

    /// Map flagged unitary; construction fails if `M†M` deviates from `I` by more than [`UNITARY_TOL`].
    pub fn unitary(space: SpaceSpec, entries: Vec<Amplitude>) -> Result<Self> {
        Self::new(space, entries)?.into_unitary()
    }

    /// Re-flags an existing map as unitary after checking it.
    pub fn into_unitary(self) -> Result<Self> {
        let dev = self.unitarity_deviation();
        if dev > UNITARY_TOL {
            return Err(HilbertError::NotUnitary(dev));
        }
        Ok(Self { unitary: true, ..self })
    }

    pub fn from_fn(space: SpaceSpec, f: impl Fn(usize, usize) -> Amplitude) -> Result<Self> {
        let d = space.total_dim();
        let entries = (0..d * d).map(|k| f(k / d, k % d)).collect();
        Self::new(space, entries)
    }

    pub fn identity(space: SpaceSpec) -> Self {
        let d = space.total_dim();
        let mut entries = vec![Amplitude::new(0.0, 0.0); d * d];
        for i in 0..d {
            entries[i * d + i] = Amplitude::new(1.0, 0.0);
        }
        Self { space, entries, unitary: true }
    }

    /// Outer product `|ket⟩⟨bra|`.
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Result<Self> {
        if ket.space != bra.space {
            return Err(HilbertError::SpaceMismatch);
        }
        let space = ket.space.clone();
        Self::from_fn(space, |i, j| ket.amps[i] * bra.amps[j].conj())
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[Amplitude] {
        &self.entries
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim();
        let entries = (0..d * d).map(|k| self.entries[(k % d) * d + k / d].conj()).collect();
        Self { space: self.space.clone(), entries, unitary: self.unitary }
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &LinearMap) -> Result<Self> {
        if self.space != rhs.space {
            return Err(HilbertError::SpaceMismatch);
        }
        let d = self.dim();
        let mut entries = vec![Amplitude::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == Amplitude::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * rhs.entries[k * d + j];
                }
            }
        }
        Ok(Self { space: self.space.clone(), entries, unitary: self.unitary && rhs.unitary })
    }

    pub fn add(&self, rhs: &LinearMap) -> Result<Self> {
        if self.space != rhs.space {
            return Err(HilbertError::SpaceMismatch);
        }
        let entries = self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect();
        Ok(Self { space: self.space.clone(), entries, unitary: false })
    }

    pub fn scale(&self, factor: Amplitude) -> Self {
        Self {
            space: self.space.clone(),
            entries: self.entries.iter().map(|a| a * factor).collect(),
            unitary: self.unitary && (factor.norm() - 1.0).abs() <= UNITARY_TOL,
        }
    }

    pub fn max_abs_diff(&self, other: &LinearMap) -> Result<f64> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Max-entry modulus of `M†M − I`.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut acc = Amplitude::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.entries[k * d + i].conj() * self.entries[k * d + j];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

/// Tensor product `a ⊗ b` acting on the concatenated space.
pub fn kron(a: &LinearMap, b: &LinearMap) -> Result<LinearMap> {
    let space = a.space.concat(&b.space)?;
    let (da, db) = (a.dim(), b.dim());
    let d = da * db;
    let mut entries = vec![Amplitude::new(0.0, 0.0); d * d];
    for i in 0..da {
        for j in 0..da {
            let aij = a.entries[i * da + j];
            for k in 0..db {
                for l in 0..db {
                    entries[(i * db + k) * d + j * db + l] = aij * b.entries[k * db + l];
                }
            }
        }
    }
    Ok(LinearMap { space, entries, unitary: a.unitary && b.unitary })
}

/// Lifts `op` (defined on the `targets` subsystems, in that order) to the whole of `space`,
/// acting as the identity on every other subsystem. Targets need not be adjacent.
pub fn embed(op: &LinearMap, targets: &[&str], space: &SpaceSpec) -> Result<LinearMap> {
    let positions = targets.iter().map(|t| space.position(t)).collect::<Result<Vec<_>>>()?;
    for (i, p) in positions.iter().enumerate() {
        if positions[..i].contains(p) {
            return Err(HilbertError::TargetMismatch);
        }
    }
    let op_subs = op.space.subsystems();
    if op_subs.len() != positions.len()
        || op_subs.iter().zip(&positions).any(|(s, &p)| *s != space.subsystems[p])
    {
        let expected: usize = positions.iter().map(|&p| space.subsystems[p].dim()).product();
        if expected != op.dim() {
            return Err(HilbertError::DimensionMismatch { expected, got: op.dim() });
        }
        return Err(HilbertError::TargetMismatch);
    }

    let n = space.subsystems.len();
    let is_target: Vec<bool> = (0..n).map(|p| positions.contains(&p)).collect();
    let local_index = |digits: &[usize]| {
        positions
            .iter()
            .fold(0, |acc, &p| acc * space.subsystems[p].dim() + digits[p])
    };

    let d = space.total_dim();
    let od = op.dim();
    let all_digits: Vec<Vec<usize>> = (0..d).map(|i| space.digits(i)).collect();
    let local: Vec<usize> = all_digits.iter().map(|dg| local_index(dg)).collect();
    let mut entries = vec![Amplitude::new(0.0, 0.0); d * d];
    for r in 0..d {
        for c in 0..d {
            let spectators_match = (0..n).all(|p| is_target[p] || all_digits[r][p] == all_digits[c][p]);
            if spectators_match {
                entries[r * d + c] = op.entries[local[r] * od + local[c]];
            }
        }
    }
    Ok(LinearMap { space: space.clone(), entries, unitary: op.unitary })
}

/// Matrix-vector product.
pub fn apply(map: &LinearMap, psi: &StateVector) -> Result<StateVector> {
    if map.space != psi.space {
        return Err(HilbertError::SpaceMismatch);
    }
    let d = map.dim();
    let amps = (0..d)
        .map(|i| {
            map.entries[i * d..(i + 1) * d]
                .iter()
                .zip(&psi.amps)
                .map(|(m, a)| m * a)
                .sum()
        })
        .collect();
    Ok(StateVector { space: psi.space.clone(), amps, normalized: map.unitary && psi.normalized })
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Amplitude> {
    if a.space != b.space {
        return Err(HilbertError::SpaceMismatch);
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// Projector onto `label` of `subsystem`, identity on the rest of `space`.
pub fn projector(space: &SpaceSpec, subsystem: &str, label: &str) -> Result<LinearMap> {
    let pos = space.position(subsystem)?;
    let target = space.subsystems[pos].label_index(label)?;
    let d = space.total_dim();
    let mut entries = vec![Amplitude::new(0.0, 0.0); d * d];
    for i in 0..d {
        if space.digits(i)[pos] == target {
            entries[i * d + i] = Amplitude::new(1.0, 0.0);
        }
    }
    Ok(LinearMap { space: space.clone(), entries, unitary: false })
}

/// Whether two normalized states agree up to a global phase: `|⟨a|b⟩| ≥ 1 − tol`.
pub fn equal_up_to_global_phase(a: &StateVector, b: &StateVector, tol: f64) -> Result<bool> {
    for s in [a, b] {
        let n = s.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(HilbertError::NotNormalized(n));
        }
    }
    Ok(inner(a, b)?.norm() >= 1.0 - tol)
}
