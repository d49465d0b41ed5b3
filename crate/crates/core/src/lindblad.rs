//! Dressed collapse operators and zero-temperature master-equation dynamics
//!
//! ```text
//! d rho / dt = -i [H(t), rho] + sum_j k_j D[O_j] rho
//! D[O] rho   = O rho O^+ - (O^+ O rho + rho O^+ O) / 2
//! ```
//!
//! Collapse operators are built from the eigenstates of the Hamiltonian, so a
//! dressed ground state is a fixed point of the dissipation.
//!
//! The integrator works in any basis: density matrices and operators here are
//! plain square matrices, and callers pick the coordinates (typically a
//! truncated energy eigenbasis).

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::hilbert::{hermiticity_error, OperatorMatrix};
use crate::spectrum::{eigenvalues, EigenDecomposition};
use crate::{Error, Result, C64};

pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Levels closer than this are treated as degenerate when ordering them.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

/// Deviations of a density matrix from the physical constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrityReport {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl IntegrityReport {
    pub fn violation(&self) -> Option<String> {
        if !(self.trace_error <= TRACE_TOL) {
            Some(format!("trace drift {:e}", self.trace_error))
        } else if !(self.hermiticity_error <= HERMITICITY_TOL) {
            Some(format!("hermiticity error {:e}", self.hermiticity_error))
        } else if !(self.min_eigenvalue >= -POSITIVITY_TOL) {
            Some(format!("negative eigenvalue {:e}", self.min_eigenvalue))
        } else {
            None
        }
    }

    /// Worst case of two reports.
    pub fn worst(self, other: IntegrityReport) -> IntegrityReport {
        IntegrityReport {
            trace_error: self.trace_error.max(other.trace_error),
            hermiticity_error: self.hermiticity_error.max(other.hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

impl DensityMatrix {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("density matrix must be square and non-empty"));
        }
        Ok(DensityMatrix(matrix))
    }

    /// `|psi><psi|` of the normalized vector.
    pub fn from_pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::invalid("cannot build a state from a zero vector"));
        }
        let psi = psi.unscale(norm);
        Ok(DensityMatrix(&psi * psi.adjoint()))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// `tr(rho A)`
    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        self.0.component_mul(&op.transpose()).sum()
    }

    /// `<psi|rho|psi>`
    pub fn overlap(&self, psi: &DVector<C64>) -> f64 {
        psi.dotc(&(&self.0 * psi)).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()).scale(0.5);
        eigenvalues(&h)[0]
    }

    pub fn integrity(&self) -> IntegrityReport {
        IntegrityReport {
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            hermiticity_error: hermiticity_error(&self.0),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }

    /// `C rho C^+`, with `C` mapping old coordinates to new ones.
    pub fn transform(&self, c: &DMatrix<C64>) -> DensityMatrix {
        DensityMatrix(c * &self.0 * c.adjoint())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub operator: DMatrix<C64>,
    pub rate: f64,
}

/// A set of channels with the anticommutator term `sum_j k_j O_j^+ O_j`
/// precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipators {
    channels: Vec<CollapseChannel>,
    decay: DMatrix<C64>,
}

impl Dissipators {
    pub fn new(dimension: usize, channels: Vec<CollapseChannel>) -> Result<Self> {
        let mut decay = DMatrix::zeros(dimension, dimension);
        for c in &channels {
            if c.operator.shape() != (dimension, dimension) {
                return Err(Error::invalid("collapse operator has the wrong shape"));
            }
            if !(c.rate >= 0.0 && c.rate.is_finite()) {
                return Err(Error::invalid(format!("invalid decay rate {}", c.rate)));
            }
            if c.rate > 0.0 {
                decay += (c.operator.adjoint() * &c.operator).scale(c.rate);
            }
        }
        let channels = channels.into_iter().filter(|c| c.rate > 0.0).collect();
        Ok(Dissipators { channels, decay })
    }

    pub fn none(dimension: usize) -> Self {
        Dissipators {
            channels: Vec::new(),
            decay: DMatrix::zeros(dimension, dimension),
        }
    }

    pub fn channels(&self) -> &[CollapseChannel] {
        &self.channels
    }

    /// `sum_j k_j D[O_j] rho`
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let half = self.half(rho);
        &half + half.adjoint()
    }

    /// Half of the dissipator whose Hermitian part is the full one:
    /// `sum_j k_j O_j rho O_j^+ / 2 - K rho / 2`.
    fn half(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = (&self.decay * rho).scale(-0.5);
        for c in &self.channels {
            out += (&c.operator * rho * c.operator.adjoint()).scale(0.5 * c.rate);
        }
        out
    }
}

/// `D[O] rho = O rho O^+ - (O^+ O rho + rho O^+ O) / 2`
pub fn dissipator(op: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let od = op.adjoint();
    let k = &od * op;
    op * rho * &od - (&k * rho + rho * &k).scale(0.5)
}

/// Keeps only the matrix elements `<m|Q|n>` with `E_n > E_m` of an operator
/// written in an ascending eigenbasis. Degenerate levels are ordered by index.
pub fn lowering_part(energies: &[f64], quadrature: &DMatrix<C64>) -> DMatrix<C64> {
    let n = energies.len();
    let mut warned = false;
    DMatrix::from_fn(n, n, |m, k| {
        if k <= m {
            return C64::new(0.0, 0.0);
        }
        let q = quadrature[(m, k)];
        if !warned && (energies[k] - energies[m]).abs() < DEGENERACY_TOL && q.norm() > 0.0 {
            log::warn!(
                "levels {m} and {k} are degenerate within {DEGENERACY_TOL:e}; ordering by index"
            );
            warned = true;
        }
        q
    })
}

/// `O = sum_{E_n > E_m} <Psi_m|(o + o^+)|Psi_n> |Psi_m><Psi_n|` in the bare
/// basis.
pub fn dressed_lowering(decomp: &EigenDecomposition, bare_op: &OperatorMatrix) -> OperatorMatrix {
    let v = &decomp.vectors;
    let eig = lowering_part(&decomp.energies, &eigenbasis_quadrature(v, bare_op.matrix()));
    OperatorMatrix::from_matrix(bare_op.space().clone(), v * eig * v.adjoint())
        .expect("decomposition matches the operator space")
}

/// Dressed lowering operator restricted to the lowest `levels` eigenstates,
/// in eigenbasis coordinates (strictly upper-triangular).
pub fn dressed_lowering_in_eigenbasis(
    decomp: &EigenDecomposition,
    bare_op: &DMatrix<C64>,
    levels: usize,
) -> Result<DMatrix<C64>> {
    if levels == 0 || levels > decomp.len() {
        return Err(Error::invalid(format!(
            "cannot keep {levels} of {} levels",
            decomp.len()
        )));
    }
    let v = decomp.vectors.columns(0, levels).into_owned();
    Ok(lowering_part(
        &decomp.energies[..levels],
        &eigenbasis_quadrature(&v, bare_op),
    ))
}

/// `V^+ (o + o^+) V`
pub fn eigenbasis_quadrature(vectors: &DMatrix<C64>, bare_op: &DMatrix<C64>) -> DMatrix<C64> {
    let q = bare_op + bare_op.adjoint();
    vectors.adjoint() * q * vectors
}

/// `tr(rho O^+ O)` for a lowering operator `O`.
pub fn dressed_population(rho: &DensityMatrix, lowering: &DMatrix<C64>) -> Result<f64> {
    population_from_number(rho, &(lowering.adjoint() * lowering))
}

/// Population from a precomputed `O^+ O`.
pub fn population_from_number(rho: &DensityMatrix, number: &DMatrix<C64>) -> Result<f64> {
    let p = rho.expectation(number).re;
    if p < -POSITIVITY_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "negative dressed population {p:e}"
        )));
    }
    Ok(p.max(0.0))
}

/// Hamiltonian and dissipators as functions of time, in one fixed set of
/// coordinates.
pub trait OpenSystem: Sync {
    fn dimension(&self) -> usize;
    fn hamiltonian(&self, t: f64) -> Cow<'_, DMatrix<C64>>;
    fn dissipators(&self, t: f64) -> Cow<'_, Dissipators>;
}

/// Time-dependent Hamiltonian with fixed channels.
pub struct DrivenSystem<F> {
    pub hamiltonian: F,
    pub dissipators: Dissipators,
}

impl<F> OpenSystem for DrivenSystem<F>
where
    F: Fn(f64) -> DMatrix<C64> + Sync,
{
    fn dimension(&self) -> usize {
        self.dissipators.decay.nrows()
    }

    fn hamiltonian(&self, t: f64) -> Cow<'_, DMatrix<C64>> {
        Cow::Owned((self.hamiltonian)(t))
    }

    fn dissipators(&self, _t: f64) -> Cow<'_, Dissipators> {
        Cow::Borrowed(&self.dissipators)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Initial RK4 step.
    pub dt: f64,
    /// Diagonal energies of an interaction picture used internally. Results
    /// are always returned in the original (Schrodinger) picture.
    pub frame: Option<Vec<f64>>,
    /// Largest change of any observable allowed when the step is halved.
    pub convergence_tol: f64,
    pub max_halvings: usize,
    /// Observables compared between step sizes; when empty the density-matrix
    /// elements themselves are compared.
    pub observables: Vec<DMatrix<C64>>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt: 0.05,
            frame: None,
            convergence_tol: 1e-6,
            max_halvings: 4,
            observables: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Step size of the returned solution.
    pub dt: f64,
    /// Largest observable change between the last two step sizes.
    pub convergence_error: f64,
    pub integrity: IntegrityReport,
}

/// Integrates the master equation from `rho0` at `t_grid[0]` and returns the
/// state at every grid time. The step is halved until the observables agree
/// between consecutive step sizes.
pub fn evolve<S: OpenSystem>(
    rho0: &DensityMatrix,
    system: &S,
    t_grid: &[f64],
    options: &EvolveOptions,
) -> Result<Evolution> {
    validate_inputs(rho0, system, t_grid, options)?;
    let mut dt = options.dt;
    let mut coarse = integrate(rho0, system, t_grid, options, dt);
    for _ in 0..options.max_halvings {
        let fine = integrate(rho0, system, t_grid, options, dt / 2.0);
        if let (Ok((c, _)), Ok((f, report))) = (&coarse, &fine) {
            let err = discrepancy(c, f, &options.observables);
            if err < options.convergence_tol {
                return Ok(Evolution {
                    times: t_grid.to_vec(),
                    states: f.clone(),
                    dt: dt / 2.0,
                    convergence_error: err,
                    integrity: *report,
                });
            }
        }
        dt /= 2.0;
        coarse = fine;
    }
    match coarse {
        Err(e) => Err(e),
        Ok(_) => Err(Error::IntegrationFailure {
            time: *t_grid.last().expect("validated"),
            reason: format!(
                "step halving did not converge to {:e} after {} halvings",
                options.convergence_tol, options.max_halvings
            ),
        }),
    }
}

/// Single fixed-step pass without the convergence check.
pub fn evolve_fixed<S: OpenSystem>(
    rho0: &DensityMatrix,
    system: &S,
    t_grid: &[f64],
    options: &EvolveOptions,
) -> Result<Evolution> {
    validate_inputs(rho0, system, t_grid, options)?;
    let (states, integrity) = integrate(rho0, system, t_grid, options, options.dt)?;
    Ok(Evolution {
        times: t_grid.to_vec(),
        states,
        dt: options.dt,
        convergence_error: f64::NAN,
        integrity,
    })
}

fn validate_inputs<S: OpenSystem>(
    rho0: &DensityMatrix,
    system: &S,
    t_grid: &[f64],
    options: &EvolveOptions,
) -> Result<()> {
    let n = system.dimension();
    if rho0.dimension() != n {
        return Err(Error::invalid(format!(
            "state dimension {} does not match system dimension {n}",
            rho0.dimension()
        )));
    }
    if let Some(reason) = rho0.integrity().violation() {
        return Err(Error::invalid(format!("initial state: {reason}")));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be non-empty and strictly ascending"));
    }
    if !(options.dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    if options.frame.as_ref().is_some_and(|f| f.len() != n) {
        return Err(Error::invalid("frame energies do not match the dimension"));
    }
    if options.observables.iter().any(|o| o.shape() != (n, n)) {
        return Err(Error::invalid("observable has the wrong shape"));
    }
    Ok(())
}

fn discrepancy(a: &[DensityMatrix], b: &[DensityMatrix], observables: &[DMatrix<C64>]) -> f64 {
    let mut err = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        if observables.is_empty() {
            err = err.max(crate::hilbert::max_abs(&(x.matrix() - y.matrix())));
        } else {
            for o in observables {
                err = err.max((x.expectation(o) - y.expectation(o)).norm());
            }
        }
    }
    err
}

/// Interaction-picture right-hand side. With frame energies `f`,
/// `rho~_mn = e^{i (f_m - f_n) tau} rho_mn` and
/// `d rho~ / dt = Phi o (-i [H - F, rho] + D rho)`.
struct Rhs<'a, S> {
    system: &'a S,
    frame: Option<&'a [f64]>,
    t_ref: f64,
}

impl<S: OpenSystem> Rhs<'_, S> {
    fn phases(&self, t: f64) -> Option<DVector<C64>> {
        let tau = t - self.t_ref;
        self.frame
            .map(|f| DVector::from_iterator(f.len(), f.iter().map(|&e| C64::from_polar(1.0, e * tau))))
    }

    /// `rho_mn = conj(u_m) u_n rho~_mn` (to the Schrodinger picture) or its
    /// inverse.
    fn rotate(u: &DVector<C64>, m: &DMatrix<C64>, inverse: bool) -> DMatrix<C64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
            let p = u[r] * u[c].conj();
            m[(r, c)] * if inverse { p } else { p.conj() }
        })
    }

    fn to_lab(&self, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
        match self.phases(t) {
            Some(u) => Self::rotate(&u, rho, false),
            None => rho.clone(),
        }
    }

    fn eval(&self, t: f64, rho_tilde: &DMatrix<C64>) -> DMatrix<C64> {
        let u = self.phases(t);
        let rho = match &u {
            Some(u) => Self::rotate(u, rho_tilde, false),
            None => rho_tilde.clone(),
        };
        let mut h = self.system.hamiltonian(t).into_owned();
        if let Some(f) = self.frame {
            for (k, e) in f.iter().enumerate() {
                h[(k, k)] -= C64::new(*e, 0.0);
            }
        }
        let diss = self.system.dissipators(t);
        let mut half = (&h * &rho) * C64::new(0.0, -1.0);
        half += diss.half(&rho);
        let full = &half + half.adjoint();
        match &u {
            Some(u) => Self::rotate(u, &full, true),
            None => full,
        }
    }
}

fn integrate<S: OpenSystem>(
    rho0: &DensityMatrix,
    system: &S,
    t_grid: &[f64],
    options: &EvolveOptions,
    dt: f64,
) -> Result<(Vec<DensityMatrix>, IntegrityReport)> {
    let rhs = Rhs {
        system,
        frame: options.frame.as_deref(),
        t_ref: t_grid[0],
    };
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::with_capacity(t_grid.len());
    let mut report = rho0.integrity();
    states.push(rho0.clone());
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            let t = w[0] + h * s as f64;
            let k1 = rhs.eval(t, &rho);
            let k2 = rhs.eval(t + 0.5 * h, &(&rho + &k1 * C64::new(0.5 * h, 0.0)));
            let k3 = rhs.eval(t + 0.5 * h, &(&rho + &k2 * C64::new(0.5 * h, 0.0)));
            let k4 = rhs.eval(t + h, &(&rho + &k3 * C64::new(h, 0.0)));
            rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        }
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::IntegrationFailure {
                time: w[1],
                reason: "non-finite density matrix".into(),
            });
        }
        let snapshot = DensityMatrix(rhs.to_lab(w[1], &rho));
        let r = snapshot.integrity();
        if let Some(reason) = r.violation() {
            return Err(Error::IntegrationFailure { time: w[1], reason });
        }
        report = report.worst(r);
        states.push(snapshot);
    }
    Ok((states, report))
}
