//! Truncated tensor-product space of three resonator modes and one qubit.
//!
//! Basis states are enumerated lexicographically in `(n_a, n_b, n_c, qubit)`
//! with the qubit ground state `g` before the excited state `e`. When a total
//! excitation cap is set, states with `n_a + n_b + n_c + qubit > cap` are
//! skipped but the relative order of the remaining states is unchanged.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Resonator mode label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    A,
    B,
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    pub fn index(self) -> usize {
        match self {
            Mode::A => 0,
            Mode::B => 1,
            Mode::C => 2,
        }
    }

    pub fn from_index(index: usize) -> Result<Mode> {
        Mode::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::invalid(format!("mode index {index} out of range 0..3")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::A => "a",
            Mode::B => "b",
            Mode::C => "c",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qubit {
    Ground,
    Excited,
}

impl Qubit {
    pub fn level(self) -> usize {
        match self {
            Qubit::Ground => 0,
            Qubit::Excited => 1,
        }
    }

    /// Eigenvalue of `sigma_z`: `+1` for `e`, `-1` for `g`.
    pub fn sigma_z(self) -> f64 {
        match self {
            Qubit::Ground => -1.0,
            Qubit::Excited => 1.0,
        }
    }

    pub fn flipped(self) -> Qubit {
        match self {
            Qubit::Ground => Qubit::Excited,
            Qubit::Excited => Qubit::Ground,
        }
    }
}

/// Occupation-number label of a bare product state `|n_a, n_b, n_c, q>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    pub photons: [usize; 3],
    pub qubit: Qubit,
}

impl BasisState {
    pub const fn new(n_a: usize, n_b: usize, n_c: usize, qubit: Qubit) -> Self {
        BasisState {
            photons: [n_a, n_b, n_c],
            qubit,
        }
    }

    pub fn excitations(&self) -> usize {
        self.photons.iter().sum::<usize>() + self.qubit.level()
    }

    pub fn photons_in(&self, mode: Mode) -> usize {
        self.photons[mode.index()]
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = match self.qubit {
            Qubit::Ground => 'g',
            Qubit::Excited => 'e',
        };
        let [a, b, c] = self.photons;
        write!(f, "|{a},{b},{c},{q}>")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertSpace {
    mode_cutoffs: [usize; 3],
    total_excitation_cap: Option<usize>,
    basis: Vec<BasisState>,
    lookup: HashMap<BasisState, usize>,
}

/// Builds the truncated space. `mode_cutoffs[j]` is the largest photon number
/// kept in mode `j` (inclusive).
pub fn build_space(
    mode_cutoffs: [usize; 3],
    total_excitation_cap: Option<usize>,
) -> Result<Arc<HilbertSpace>> {
    if let Some(j) = mode_cutoffs.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "cutoff of mode {} must be at least 1",
            Mode::ALL[j]
        )));
    }
    if total_excitation_cap == Some(0) {
        return Err(Error::invalid("total excitation cap must be at least 1"));
    }

    let mut basis = Vec::new();
    for n_a in 0..=mode_cutoffs[0] {
        for n_b in 0..=mode_cutoffs[1] {
            for n_c in 0..=mode_cutoffs[2] {
                for qubit in [Qubit::Ground, Qubit::Excited] {
                    let state = BasisState::new(n_a, n_b, n_c, qubit);
                    if total_excitation_cap.is_none_or(|cap| state.excitations() <= cap) {
                        basis.push(state);
                    }
                }
            }
        }
    }
    let lookup = basis.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    Ok(Arc::new(HilbertSpace {
        mode_cutoffs,
        total_excitation_cap,
        basis,
        lookup,
    }))
}

impl HilbertSpace {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn mode_cutoffs(&self) -> [usize; 3] {
        self.mode_cutoffs
    }

    pub fn total_excitation_cap(&self) -> Option<usize> {
        self.total_excitation_cap
    }

    pub fn basis(&self) -> &[BasisState] {
        &self.basis
    }

    pub fn state_at(&self, index: usize) -> Option<BasisState> {
        self.basis.get(index).copied()
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.lookup.get(state).copied()
    }

    pub fn contains(&self, state: &BasisState) -> bool {
        self.lookup.contains_key(state)
    }

    pub fn identity(self: &Arc<Self>) -> OperatorMatrix {
        let d = self.dimension();
        OperatorMatrix::from_matrix(self.clone(), DMatrix::identity(d, d))
            .expect("identity has the space dimension")
    }

    /// Matrix that is diagonal in the bare basis with entries `f(state)`.
    pub fn diagonal(self: &Arc<Self>, f: impl Fn(&BasisState) -> f64) -> OperatorMatrix {
        let diag = DVector::from_iterator(
            self.dimension(),
            self.basis.iter().map(|s| C64::new(f(s), 0.0)),
        );
        OperatorMatrix {
            space: self.clone(),
            matrix: DMatrix::from_diagonal(&diag),
        }
    }
}

/// Dense operator on a [`HilbertSpace`], expressed in its bare basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    space: Arc<HilbertSpace>,
    matrix: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn from_matrix(space: Arc<HilbertSpace>, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.dimension();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::invalid(format!(
                "operator is {}x{} but the space has dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(OperatorMatrix { space, matrix })
    }

    pub fn zeros(space: &Arc<HilbertSpace>) -> Self {
        let d = space.dimension();
        OperatorMatrix {
            space: space.clone(),
            matrix: DMatrix::zeros(d, d),
        }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: f64) -> OperatorMatrix {
        OperatorMatrix {
            space: self.space.clone(),
            matrix: &self.matrix * C64::new(factor, 0.0),
        }
    }

    /// `self * other - other * self`
    pub fn commutator(&self, other: &OperatorMatrix) -> OperatorMatrix {
        self * other - other * self
    }

    /// Largest absolute entry of `self - self^dagger`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        assert!(
            Arc::ptr_eq(&self.space, &state.space) || self.space == state.space,
            "operator and state live on different spaces"
        );
        StateVector {
            space: self.space.clone(),
            amplitudes: &self.matrix * &state.amplitudes,
        }
    }

    /// `<bra| self |ket>`
    pub fn element(&self, bra: &StateVector, ket: &StateVector) -> C64 {
        bra.amplitudes.dotc(&(&self.matrix * &ket.amplitudes))
    }
}

pub(crate) fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn assert_same_space(a: &OperatorMatrix, b: &OperatorMatrix) {
    assert!(
        Arc::ptr_eq(&a.space, &b.space) || a.space == b.space,
        "operators live on different spaces"
    );
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(self, rhs);
        OperatorMatrix {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(self, rhs);
        OperatorMatrix {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(self, rhs);
        OperatorMatrix {
            space: self.space.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self - &rhs
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self + &rhs
    }
}

/// Pure state on a [`HilbertSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: Arc<HilbertSpace>,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(space: Arc<HilbertSpace>, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dimension() {
            return Err(Error::invalid(format!(
                "state has {} amplitudes but the space has dimension {}",
                amplitudes.len(),
                space.dimension()
            )));
        }
        Ok(StateVector { space, amplitudes })
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::invalid("cannot normalize the zero vector"));
        }
        Ok(StateVector {
            space: self.space.clone(),
            amplitudes: self.amplitudes.unscale(n),
        })
    }

    /// Linear combination `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &StateVector, beta: C64) -> StateVector {
        StateVector {
            space: self.space.clone(),
            amplitudes: &self.amplitudes * alpha + &other.amplitudes * beta,
        }
    }
}

/// Annihilation operator of one resonator mode, embedded with identities on
/// the other factors.
pub fn mode_annihilation(space: &Arc<HilbertSpace>, mode: Mode) -> OperatorMatrix {
    let j = mode.index();
    let mut op = OperatorMatrix::zeros(space);
    for (col, state) in space.basis().iter().enumerate() {
        let n = state.photons[j];
        if n == 0 {
            continue;
        }
        let mut lowered = *state;
        lowered.photons[j] -= 1;
        if let Some(row) = space.index_of(&lowered) {
            op.matrix[(row, col)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    op
}

/// `a_j^dagger a_j`, built directly as a diagonal matrix.
pub fn number_operator(space: &Arc<HilbertSpace>, mode: Mode) -> OperatorMatrix {
    space.diagonal(|s| s.photons[mode.index()] as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitOp {
    SigmaX,
    SigmaZ,
    /// Lowering operator `|g><e|`.
    SigmaMinus,
}

/// Pauli or lowering matrix on the qubit factor. `sigma_z |e> = +|e>`.
pub fn qubit_operator(space: &Arc<HilbertSpace>, which: QubitOp) -> OperatorMatrix {
    if which == QubitOp::SigmaZ {
        return space.diagonal(|s| s.qubit.sigma_z());
    }
    let mut op = OperatorMatrix::zeros(space);
    for (col, state) in space.basis().iter().enumerate() {
        let flipped = BasisState {
            qubit: state.qubit.flipped(),
            ..*state
        };
        let Some(row) = space.index_of(&flipped) else {
            continue;
        };
        let present = match which {
            QubitOp::SigmaX => true,
            QubitOp::SigmaMinus => state.qubit == Qubit::Excited,
            QubitOp::SigmaZ => unreachable!(),
        };
        if present {
            op.matrix[(row, col)] = C64::new(1.0, 0.0);
        }
    }
    op
}

/// Unit vector on the bare product state `|n_a, n_b, n_c, qubit>`.
pub fn bare_state(
    space: &Arc<HilbertSpace>,
    n_a: usize,
    n_b: usize,
    n_c: usize,
    qubit: Qubit,
) -> Result<StateVector> {
    basis_vector(space, &BasisState::new(n_a, n_b, n_c, qubit))
}

pub fn basis_vector(space: &Arc<HilbertSpace>, state: &BasisState) -> Result<StateVector> {
    let index = space.index_of(state).ok_or_else(|| {
        Error::invalid(format!(
            "{state} is outside the truncated space (cutoffs {:?}, cap {:?})",
            space.mode_cutoffs(),
            space.total_excitation_cap()
        ))
    })?;
    let mut amplitudes = DVector::zeros(space.dimension());
    amplitudes[index] = C64::new(1.0, 0.0);
    Ok(StateVector {
        space: space.clone(),
        amplitudes,
    })
}
