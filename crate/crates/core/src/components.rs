//! Optical and atomic elements of the interferometer, as linear maps.
//!
//! Path convention: between the first beam splitter and the mirrors, path A is
//! the direction label `x` and path B is `y`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use thiserror::Error;

use crate::hilbert::{
    self, embed, projector, Amplitude, HilbertError, LinearMap, SpaceSpec, StateVector, SubsystemSpec, UNITARY_TOL,
};

pub const DIRECTION: &str = "direction";
pub const PHOTON: &str = "photon";
pub const ATOM: &str = "atom";
pub const ERASER: &str = "eraser";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComponentError {
    #[error("phase must be finite, got {0}")]
    NonFinitePhase(f64),
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("space has no `direction` subsystem")]
    MissingDirection,
    #[error("state must be normalized")]
    NotNormalized,
    #[error("random draw {0} outside [0, 1)")]
    InvalidDraw(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

pub type Result<T> = std::result::Result<T, ComponentError>;

/// Interferometer arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Path {
    A,
    B,
}

impl Path {
    pub fn direction_label(self) -> &'static str {
        match self {
            Path::A => "x",
            Path::B => "y",
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Path::A => "A",
            Path::B => "B",
        })
    }
}

fn c(re: f64, im: f64) -> Amplitude {
    Amplitude::new(re, im)
}

fn direction_space() -> SpaceSpec {
    SpaceSpec::single(SubsystemSpec::direction())
}

fn direction_map(entries: [Amplitude; 4]) -> LinearMap {
    LinearMap::unitary(direction_space(), entries.to_vec()).expect("2x2 element is unitary")
}

/// Symmetric 50/50 beam splitter: `|x⟩ → (|x⟩ + i|y⟩)/√2`, `|y⟩ → (|y⟩ + i|x⟩)/√2`.
pub fn beam_splitter() -> LinearMap {
    let h = FRAC_1_SQRT_2;
    direction_map([c(h, 0.0), c(0.0, h), c(0.0, h), c(h, 0.0)])
}

/// Both mirrors together: `|x⟩ → i|y⟩`, `|y⟩ → i|x⟩`.
pub fn mirror_pair() -> LinearMap {
    direction_map([c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

/// Multiplies the amplitude on `path` by `e^{iφ}`.
pub fn phase_shifter(phi: f64, path: Path) -> Result<LinearMap> {
    if !phi.is_finite() {
        return Err(ComponentError::NonFinitePhase(phi));
    }
    let shift = Amplitude::from_polar(1.0, phi);
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    Ok(match path {
        Path::A => direction_map([shift, zero, zero, one]),
        Path::B => direction_map([one, zero, zero, shift]),
    })
}

/// Space `direction ⊗ photon ⊗ atom` on which the entangler acts.
pub fn entangler_space() -> SpaceSpec {
    SpaceSpec::new(vec![SubsystemSpec::direction(), SubsystemSpec::photon(), SubsystemSpec::atom()])
        .expect("canonical subsystems are distinct")
}

/// Emission of a which-way photon: `|x,vac,e⟩ → |x,A,g⟩`, `|y,vac,e⟩ → |y,B,g⟩`.
///
/// Outside the physical input subspace the map is completed by the inverse
/// transpositions and the identity, which keeps it a permutation matrix.
pub fn which_way_entangler() -> LinearMap {
    let space = entangler_space();
    let swaps = [
        (["x", "vac", "e"], ["x", "A", "g"]),
        (["y", "vac", "e"], ["y", "B", "g"]),
    ];
    let d = space.total_dim();
    let mut perm: Vec<usize> = (0..d).collect();
    for (from, to) in swaps {
        let (i, j) = (space.index_of(&from).unwrap(), space.index_of(&to).unwrap());
        perm.swap(i, j);
    }
    let map = LinearMap::from_fn(space, |r, col| if perm[col] == r { c(1.0, 0.0) } else { c(0.0, 0.0) })
        .expect("permutation matrix is finite");
    map.into_unitary().expect("permutation matrix is unitary")
}

/// Result of a classical which-way readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub outcome: Path,
    pub collapsed: StateVector,
    pub prob: f64,
}

/// Probabilities of finding the particle on path A and B.
pub fn which_way_probabilities(psi: &StateVector) -> Result<(f64, f64)> {
    let space = psi.space();
    if !space.contains(DIRECTION) {
        return Err(ComponentError::MissingDirection);
    }
    let p = |path: Path| -> Result<f64> {
        let proj = projector(space, DIRECTION, path.direction_label())?;
        Ok(hilbert::apply(&proj, psi)?.norm_sqr())
    };
    Ok((p(Path::A)?, p(Path::B)?))
}

/// Projective which-way detection: outcome A if `draw < Prob(A)`, B otherwise.
pub fn which_way_readout(psi: &StateVector, draw: f64) -> Result<Readout> {
    if !(0.0..1.0).contains(&draw) {
        return Err(ComponentError::InvalidDraw(draw));
    }
    if !psi.is_normalized() {
        return Err(ComponentError::NotNormalized);
    }
    let (pa, pb) = which_way_probabilities(psi)?;
    let (outcome, prob) = if draw < pa { (Path::A, pa) } else { (Path::B, pb) };
    assert!(prob > 0.0, "zero-probability which-way branch drawn");
    let proj = projector(psi.space(), DIRECTION, outcome.direction_label())?;
    let collapsed = hilbert::apply(&proj, psi)?.normalized()?;
    Ok(Readout { outcome, collapsed, prob })
}

/// Which photon mode the eraser atom couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EraserMode {
    /// `(|A⟩ + |B⟩)/√2`
    #[default]
    Symmetric,
    /// `(|A⟩ − |B⟩)/√2`
    Antisymmetric,
}

/// Space `photon ⊗ eraser` on which the Kraus pair acts.
pub fn eraser_space() -> SpaceSpec {
    SpaceSpec::new(vec![SubsystemSpec::photon(), SubsystemSpec::eraser()]).expect("canonical subsystems are distinct")
}

/// Two-outcome absorption measurement of the photon by the eraser atom.
#[derive(Debug, Clone, PartialEq)]
pub struct EraserKrausPair {
    pub k_abs: LinearMap,
    pub k_noabs: LinearMap,
    pub eta: f64,
}

impl EraserKrausPair {
    /// Max-entry modulus of `K_abs†K_abs + K_noabs†K_noabs − I`.
    pub fn completeness_deviation(&self) -> f64 {
        let sum = |k: &LinearMap| k.dagger().compose(k).expect("same space");
        let total = sum(&self.k_abs).add(&sum(&self.k_noabs)).expect("same space");
        total
            .max_abs_diff(&LinearMap::identity(self.k_abs.space().clone()))
            .expect("same space")
    }

    pub fn space(&self) -> &SpaceSpec {
        self.k_abs.space()
    }
}

/// Absorption with efficiency `eta` of the symmetric photon mode.
pub fn eraser_kraus(eta: f64) -> Result<EraserKrausPair> {
    eraser_kraus_with_mode(eta, EraserMode::Symmetric)
}

/// `K_abs = √η |vac,ε⟩⟨m,γ|`, `K_noabs = I − (1 − √(1−η)) |m,γ⟩⟨m,γ|` for coupled mode `m`.
pub fn eraser_kraus_with_mode(eta: f64, mode: EraserMode) -> Result<EraserKrausPair> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(ComponentError::InvalidEta(eta));
    }
    let space = eraser_space();
    let h = FRAC_1_SQRT_2;
    let sign = match mode {
        EraserMode::Symmetric => 1.0,
        EraserMode::Antisymmetric => -1.0,
    };
    let a_gamma = StateVector::basis(space.clone(), &["A", "gamma"])?;
    let b_gamma = StateVector::basis(space.clone(), &["B", "gamma"])?;
    let coupled = StateVector::new(
        space.clone(),
        a_gamma
            .amplitudes()
            .iter()
            .zip(b_gamma.amplitudes())
            .map(|(a, b)| a * h + b * (sign * h))
            .collect(),
    )?;
    let absorbed = StateVector::basis(space.clone(), &["vac", "epsilon"])?;

    let k_abs = LinearMap::outer(&absorbed, &coupled)?.scale(c(eta.sqrt(), 0.0));
    let shrink = 1.0 - (1.0 - eta).sqrt();
    let k_noabs = LinearMap::identity(space).add(&LinearMap::outer(&coupled, &coupled)?.scale(c(-shrink, 0.0)))?;
    let pair = EraserKrausPair { k_abs, k_noabs, eta };
    debug_assert!(pair.completeness_deviation() <= UNITARY_TOL);
    Ok(pair)
}

/// Whether the channel to the eraser atom is open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelState {
    pub open: bool,
}

/// Final detectors `D_X`, `D_Y` embedded into `space`.
pub fn detector_projectors(space: &SpaceSpec) -> Result<(LinearMap, LinearMap)> {
    if !space.contains(DIRECTION) {
        return Err(ComponentError::MissingDirection);
    }
    let dir = SpaceSpec::single(SubsystemSpec::direction());
    let px = projector(&dir, DIRECTION, "x")?;
    let py = projector(&dir, DIRECTION, "y")?;
    Ok((embed(&px, &[DIRECTION], space)?, embed(&py, &[DIRECTION], space)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{apply, equal_up_to_global_phase, PHASE_TOL};

    fn dir_state(labels: &str) -> StateVector {
        StateVector::basis(direction_space(), &[labels]).unwrap()
    }

    /// Output state after the second beam splitter, written out by hand in the `direction ⊗ photon ⊗ atom` basis.
    fn psi_out_by_hand() -> StateVector {
        let space = entangler_space();
        let mut amps = vec![c(0.0, 0.0); 12];
        let set = |amps: &mut Vec<Amplitude>, l: [&str; 3], v: Amplitude| amps[space.index_of(&l).unwrap()] = v;
        set(&mut amps, ["y", "A", "g"], c(0.0, 0.5));
        set(&mut amps, ["y", "B", "g"], c(0.0, -0.5));
        set(&mut amps, ["x", "A", "g"], c(-0.5, 0.0));
        set(&mut amps, ["x", "B", "g"], c(-0.5, 0.0));
        StateVector::new(space.clone(), amps).unwrap()
    }

    #[test]
    fn beam_splitter_columns() {
        let b = beam_splitter();
        assert!((b.entry(0, 0) - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((b.entry(1, 0) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(b.unitarity_deviation() <= 1e-12);
    }

    #[test]
    fn beam_splitter_twice_sends_x_to_i_y() {
        let b = beam_splitter();
        let out = apply(&b.compose(&b).unwrap(), &dir_state("x")).unwrap();
        assert!(out.max_abs_diff(&dir_state("y").scaled(c(0.0, 1.0))).unwrap() < 1e-15);
    }

    #[test]
    fn mirrors_are_i_times_swap() {
        let m = mirror_pair();
        assert_eq!(m.entries(), &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert!(m.unitarity_deviation() == 0.0);
    }

    #[test]
    fn interferometer_is_minus_identity() {
        let mzi = beam_splitter().compose(&mirror_pair()).unwrap().compose(&beam_splitter()).unwrap();
        let target = LinearMap::identity(direction_space()).scale(c(-1.0, 0.0));
        assert!(mzi.max_abs_diff(&target).unwrap() <= 1e-10);
    }

    #[test]
    fn phase_shifter_edge_cases() {
        let zero = phase_shifter(0.0, Path::B).unwrap();
        assert_eq!(zero.max_abs_diff(&LinearMap::identity(direction_space())).unwrap(), 0.0);
        assert!(matches!(phase_shifter(f64::NAN, Path::A), Err(ComponentError::NonFinitePhase(_))));
        assert!(matches!(phase_shifter(f64::INFINITY, Path::A), Err(ComponentError::NonFinitePhase(_))));
    }

    #[test]
    fn entangler_produces_eq6_and_eq7() {
        let space = entangler_space();
        let ent = which_way_entangler();
        assert_eq!(ent.unitarity_deviation(), 0.0);
        let bs = embed(&beam_splitter(), &[DIRECTION], &space).unwrap();
        let m = embed(&mirror_pair(), &[DIRECTION], &space).unwrap();
        let psi_in = StateVector::basis(space.clone(), &["x", "vac", "e"]).unwrap();
        let psi1 = apply(&bs, &psi_in).unwrap();
        let psi2 = apply(&ent, &psi1).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((psi2.amplitude(&["x", "A", "g"]).unwrap() - c(h, 0.0)).norm() < 1e-15);
        assert!((psi2.amplitude(&["y", "B", "g"]).unwrap() - c(0.0, h)).norm() < 1e-15);
        assert!((psi2.norm_sqr() - 1.0).abs() < 1e-15);
        let psi3 = apply(&m, &psi2).unwrap();
        assert!((psi3.amplitude(&["y", "A", "g"]).unwrap() - c(0.0, h)).norm() < 1e-15);
        assert!((psi3.amplitude(&["x", "B", "g"]).unwrap() - c(-h, 0.0)).norm() < 1e-15);
        let out = apply(&bs, &psi3).unwrap();
        assert!(out.max_abs_diff(&psi_out_by_hand()).unwrap() < 1e-15);
    }

    #[test]
    fn readout_after_first_beam_splitter() {
        let psi = apply(&beam_splitter(), &dir_state("x")).unwrap();
        let (pa, pb) = which_way_probabilities(&psi).unwrap();
        assert!((pa - 0.5).abs() < 1e-15 && (pb - 0.5).abs() < 1e-15);
        let r = which_way_readout(&psi, 0.25).unwrap();
        assert_eq!(r.outcome, Path::A);
        assert!(equal_up_to_global_phase(&r.collapsed, &dir_state("x"), PHASE_TOL).unwrap());
        let r = which_way_readout(&psi, 0.75).unwrap();
        assert_eq!(r.outcome, Path::B);
        assert!(equal_up_to_global_phase(&r.collapsed, &dir_state("y"), PHASE_TOL).unwrap());
    }

    #[test]
    fn readout_of_x_is_certain() {
        let r = which_way_readout(&dir_state("x"), 0.999).unwrap();
        assert_eq!(r.outcome, Path::A);
        assert_eq!(r.prob, 1.0);
        assert!(matches!(which_way_readout(&dir_state("x"), 1.0), Err(ComponentError::InvalidDraw(_))));
    }

    #[test]
    fn eraser_kraus_validates_eta() {
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(eraser_kraus(bad), Err(ComponentError::InvalidEta(_))));
        }
        for eta in [0.1, 0.5, 1.0] {
            assert!(eraser_kraus(eta).unwrap().completeness_deviation() <= 1e-10);
            let anti = eraser_kraus_with_mode(eta, EraserMode::Antisymmetric).unwrap();
            assert!(anti.completeness_deviation() <= 1e-10);
        }
    }

    #[test]
    fn eraser_on_phi_out() {
        let phi_out = StateVector::product(&[
            psi_out_by_hand(),
            StateVector::basis(SpaceSpec::single(SubsystemSpec::eraser()), &["gamma"]).unwrap(),
        ])
        .unwrap();
        let space = phi_out.space().clone();
        let pair = eraser_kraus(1.0).unwrap();
        let k_abs = embed(&pair.k_abs, &[PHOTON, ERASER], &space).unwrap();
        let k_noabs = embed(&pair.k_noabs, &[PHOTON, ERASER], &space).unwrap();

        let abs = apply(&k_abs, &phi_out).unwrap();
        assert!((abs.norm_sqr() - 0.5).abs() < 1e-12);
        let expected = StateVector::basis(space.clone(), &["x", "vac", "g", "epsilon"]).unwrap().scaled(c(-1.0, 0.0));
        let abs_n = abs.normalized().unwrap();
        assert!(abs_n.max_abs_diff(&expected).unwrap() < 1e-12);

        let noabs = apply(&k_noabs, &phi_out).unwrap().normalized().unwrap();
        let h = FRAC_1_SQRT_2;
        let mut amps = vec![c(0.0, 0.0); space.total_dim()];
        amps[space.index_of(&["y", "A", "g", "gamma"]).unwrap()] = c(0.0, h);
        amps[space.index_of(&["y", "B", "g", "gamma"]).unwrap()] = c(0.0, -h);
        let expected = StateVector::new(space, amps).unwrap();
        assert!(equal_up_to_global_phase(&noabs, &expected, 1e-12).unwrap());
    }

    #[test]
    fn detector_projectors_are_complete() {
        let space = entangler_space();
        let (px, py) = detector_projectors(&space).unwrap();
        let sum = px.add(&py).unwrap();
        assert_eq!(sum.max_abs_diff(&LinearMap::identity(space.clone())).unwrap(), 0.0);
        let prob_x = apply(&px, &psi_out_by_hand()).unwrap().norm_sqr();
        assert!((prob_x - 0.5).abs() < 1e-12);
        let only_atom = SpaceSpec::single(SubsystemSpec::atom());
        assert_eq!(detector_projectors(&only_atom), Err(ComponentError::MissingDirection));
    }
}
