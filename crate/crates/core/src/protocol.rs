//! Two-step Bell/GHZ generation protocol: a qubit prepared in
//! `(|g> + |e>)/sqrt(2)` is held on a multiphoton resonance for half a Rabi
//! cycle of the effective coupling, then detuned, leaving
//! `(|psi_0> + e^{i phi}|psi_n>)|g>/sqrt(2)`.
//!
//! Dynamics run in the energy eigenbasis of the resonant Hamiltonian,
//! truncated at an energy ceiling above the resonant pair. After the
//! midpoint of the detuning ramp the coordinates switch to the eigenbasis of
//! the detuned Hamiltonian projected on the same span, together with the
//! dressed collapse operators.

use std::borrow::Cow;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{qubit_frequency_at, HamiltonianTerms, SystemParams, TuningSchedule};
use crate::hilbert::{
    basis_vector, build_space, mode_annihilation, qubit_operator, BasisState, HilbertSpace, Mode,
    Qubit, QubitOp,
};
use crate::lindblad::{
    eigenbasis_quadrature, evolve, lowering_part, population_from_number, CollapseChannel,
    DensityMatrix, Dissipators, EvolveOptions, IntegrityReport, OpenSystem,
};
use crate::perturbation::{g_eff_bell_closed, g_eff_ghz_closed};
use crate::spectrum::{
    diagonalize, diagonalize_hermitian, dressed_pair_states, find_avoided_crossing, identify_level,
    tracked_pair, CrossingInfo, EigenDecomposition,
};
use crate::{Error, Result, C64};

/// Resolution of the coarse phase grid in [`fidelity`].
pub const PHASE_GRID: f64 = 1e-3;
/// Splittings below this fraction of omega_a are treated as a closed gap.
const MIN_G_EFF: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    B110,
    B101,
    B011,
    #[serde(rename = "GHZ")]
    Ghz,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::B110, Target::B101, Target::B011, Target::Ghz];

    pub fn active_modes(self) -> &'static [Mode] {
        match self {
            Target::B110 => &[Mode::A, Mode::B],
            Target::B101 => &[Mode::A, Mode::C],
            Target::B011 => &[Mode::B, Mode::C],
            Target::Ghz => &[Mode::A, Mode::B, Mode::C],
        }
    }

    pub fn is_active(self, mode: Mode) -> bool {
        self.active_modes().contains(&mode)
    }

    /// Bare photon state reached from `|0,0,0,e>`.
    pub fn photon_state(self) -> BasisState {
        let mut photons = [0; 3];
        for m in self.active_modes() {
            photons[m.index()] = 1;
        }
        BasisState {
            photons,
            qubit: Qubit::Ground,
        }
    }

    /// Bare resonance: the qubit frequency equals the sum of the active mode
    /// frequencies.
    pub fn resonance(self, params: &SystemParams) -> f64 {
        self.active_modes().iter().map(|&m| params.omega(m)).sum()
    }

    pub fn g_eff_closed(self, params: &SystemParams) -> f64 {
        match self {
            Target::Ghz => g_eff_ghz_closed(params),
            t => {
                let m = t.active_modes();
                g_eff_bell_closed(params, (m[0], m[1]))
            }
        }
    }

    /// Couplings of the target: `g` on active modes and 0 elsewhere.
    pub fn couplings(self, g: f64) -> [f64; 3] {
        Mode::ALL.map(|m| if self.is_active(m) { g } else { 0.0 })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::B110 => "B110",
            Target::B101 => "B101",
            Target::B011 => "B011",
            Target::Ghz => "GHZ",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B110" => Ok(Target::B110),
            "B101" => Ok(Target::B101),
            "B011" => Ok(Target::B011),
            "GHZ" => Ok(Target::Ghz),
            _ => Err(Error::invalid(format!("unknown target {s:?}"))),
        }
    }
}

/// How collapse operators follow the Hamiltonian during the detuning ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPolicy {
    /// Resonant-plateau operators until the ramp midpoint, detuned-plateau
    /// operators afterwards.
    #[default]
    PlateauSwitch,
    /// Operators rebuilt from the instantaneous Hamiltonian at every
    /// evaluation inside the ramp.
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub target: Target,
    /// Frequencies and mixing angle; couplings and decay rates are replaced
    /// according to `target`, `coupling`, `gamma` and `kappa`.
    pub params: SystemParams,
    pub coupling: f64,
    /// Photon cutoff of the active modes; inactive modes keep one photon.
    pub cutoff: usize,
    pub excitation_cap: Option<usize>,
    pub gamma: f64,
    /// Mode decay rate; `gamma / 2` when unset.
    pub kappa: Option<f64>,
    /// Coupling switch-on. Before it the qubit evolves alone.
    pub t_on: f64,
    /// Time from `t_on` to the ramp midpoint; `pi / (2 |g_eff|)` from the
    /// numerically extracted coupling when unset.
    pub hold: Option<f64>,
    pub ramp_rate: f64,
    pub delta_omega_q: f64,
    /// Duration after the ramp ends.
    pub t_post: f64,
    pub sample_dt: f64,
    pub dt: f64,
    pub convergence_tol: f64,
    /// Eigenstates more than this above the resonant pair are dropped.
    pub energy_margin: f64,
    pub search_half_window: f64,
    pub channel_policy: ChannelPolicy,
}

impl ProtocolConfig {
    /// Defaults: Bell targets at `g = 0.1`, `theta = pi/6`; GHZ at `g = 0.12`,
    /// `theta = 0`. The energy margins are the smallest for which the final
    /// fidelity changes by less than 1e-5 when the margin is raised.
    pub fn new(target: Target) -> Self {
        let (coupling, theta, energy_margin) = match target {
            Target::Ghz => (0.12, 0.0, 1.0),
            _ => (0.1, FRAC_PI_6, 2.0),
        };
        ProtocolConfig {
            target,
            params: SystemParams {
                theta,
                ..SystemParams::default()
            },
            coupling,
            cutoff: 4,
            excitation_cap: None,
            gamma: 0.0,
            kappa: None,
            t_on: 5.0,
            hold: None,
            ramp_rate: PI / 20.0,
            delta_omega_q: -0.5,
            t_post: 20.0,
            sample_dt: 1.0,
            dt: 0.2,
            convergence_tol: 1e-6,
            energy_margin,
            search_half_window: 0.15,
            channel_policy: ChannelPolicy::PlateauSwitch,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn kappa_value(&self) -> f64 {
        self.kappa.unwrap_or(self.gamma / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ramp_rate", self.ramp_rate),
            ("sample_dt", self.sample_dt),
            ("dt", self.dt),
            ("convergence_tol", self.convergence_tol),
            ("energy_margin", self.energy_margin),
            ("search_half_window", self.search_half_window),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("coupling", self.coupling),
            ("gamma", self.gamma),
            ("kappa", self.kappa_value()),
            ("t_on", self.t_on),
            ("t_post", self.t_post),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(h) = self.hold {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(format!("hold must be positive, got {h}")));
            }
        }
        if !self.delta_omega_q.is_finite() || self.delta_omega_q == 0.0 {
            return Err(Error::invalid("delta_omega_q must be nonzero"));
        }
        if self.cutoff < 1 {
            return Err(Error::invalid("active-mode cutoff must be at least 1"));
        }
        self.system_params(self.params.omega_q).validate()
    }

    /// Parameters of the run at qubit frequency `omega_q`, lossless.
    pub fn system_params(&self, omega_q: f64) -> SystemParams {
        let theta = match self.target {
            Target::Ghz => 0.0,
            _ => self.params.theta,
        };
        SystemParams {
            theta,
            omega_q,
            ..self.params
        }
        .with_couplings(self.target.couplings(self.coupling))
        .with_decoherence(0.0)
    }

    pub fn cutoffs(&self) -> [usize; 3] {
        Mode::ALL.map(|m| if self.target.is_active(m) { self.cutoff } else { 1 })
    }

    pub fn ramp_duration(&self) -> f64 {
        FRAC_PI_2 / self.ramp_rate
    }
}

/// `(|psi_0,g> + e^{i phi} |psi_n,g>) / sqrt(2)` for any `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFamily {
    pub ground: DVector<C64>,
    pub partner: DVector<C64>,
}

impl TargetFamily {
    pub fn state(&self, phi: f64) -> DVector<C64> {
        (&self.ground + &self.partner * C64::from_polar(1.0, phi)).unscale(2f64.sqrt())
    }

    /// The same family in other coordinates, `x -> C^+ x`.
    pub fn project(&self, c: &DMatrix<C64>) -> TargetFamily {
        TargetFamily {
            ground: c.adjoint() * &self.ground,
            partner: c.adjoint() * &self.partner,
        }
    }

    /// Operators whose expectations determine the fidelity.
    fn observables(&self) -> [DMatrix<C64>; 3] {
        [
            &self.ground * self.ground.adjoint(),
            &self.partner * self.partner.adjoint(),
            &self.partner * self.ground.adjoint(),
        ]
    }
}

/// Maximizes `sqrt(<psi(phi)|rho|psi(phi)>)` over `phi` on a grid with
/// spacing [`PHASE_GRID`], refined by golden-section search. Returns the
/// maximum and `phi* in (-pi, pi]`.
pub fn fidelity(rho: &DensityMatrix, family: &TargetFamily) -> (f64, f64) {
    let uu = rho.overlap(&family.ground);
    let vv = rho.overlap(&family.partner);
    let uv = family.ground.dotc(&(rho.matrix() * &family.partner));
    let value = |phi: f64| 0.5 * (uu + vv + 2.0 * (C64::from_polar(1.0, phi) * uv).re);

    let n = (2.0 * PI / PHASE_GRID).ceil() as usize;
    let (mut best_phi, mut best) = (-PI, f64::NEG_INFINITY);
    for k in 0..n {
        let phi = -PI + k as f64 * PHASE_GRID;
        let v = value(phi);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_phi - PHASE_GRID, best_phi + PHASE_GRID);
    while b - a > 1e-12 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if value(c) > value(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mut phi = 0.5 * (a + b);
    if value(phi) < best {
        phi = best_phi;
    }
    let best = value(phi).max(best);
    let phi = if phi <= -PI { phi + 2.0 * PI } else if phi > PI { phi - 2.0 * PI } else { phi };
    (best.max(0.0).sqrt().min(1.0), phi)
}

/// Dressed `|psi_0,g>` and `|psi_0,e>` of `decomp` (a Hamiltonian near the
/// resonance of `target`). `|psi_0,e>` is the dressed partner of the bare
/// state after symmetric orthonormalization against the target photon state,
/// which stays well defined exactly on resonance.
pub fn dressed_start_states(
    space: &Arc<HilbertSpace>,
    decomp: &EigenDecomposition,
    target: Target,
) -> Result<[DVector<C64>; 2]> {
    let g = basis_vector(space, &BasisState::new(0, 0, 0, Qubit::Ground))?;
    let e = basis_vector(space, &BasisState::new(0, 0, 0, Qubit::Excited))?;
    let n = basis_vector(space, &target.photon_state())?;
    let ground = identify_level(decomp, &g)?;
    let reference = DMatrix::from_columns(&[e.amplitudes().clone(), n.amplitudes().clone()]);
    let levels = tracked_pair(decomp, &reference);
    let [excited, _] = dressed_pair_states(decomp, levels, [e.amplitudes(), n.amplitudes()])?;
    Ok([
        align_phase(decomp.vector(ground.index), g.amplitudes()),
        align_phase(excited, e.amplitudes()),
    ])
}

/// Fixes the arbitrary phase of a dressed state so that its overlap with the
/// bare state it is labelled by is real and positive. Superpositions of
/// dressed states depend on this choice.
fn align_phase(v: DVector<C64>, bare: &DVector<C64>) -> DVector<C64> {
    let p = bare.dotc(&v);
    if p.norm() > 0.0 {
        v * (p.conj() / p.norm())
    } else {
        v
    }
}

/// `(|psi_0,g> + |psi_0,e>) / sqrt(2)` of the coupled Hamiltonian at
/// `params_resonant`.
pub fn prepare_initial(
    space: &Arc<HilbertSpace>,
    params_resonant: &SystemParams,
    target: Target,
) -> Result<DensityMatrix> {
    let decomp = diagonalize(&HamiltonianTerms::new(space).assemble(params_resonant))?;
    let [g, e] = dressed_start_states(space, &decomp, target)?;
    DensityMatrix::from_pure(&(g + e))
}

/// Target family from the dressed eigenstates of the detuned Hamiltonian.
pub fn target_state(
    target: Target,
    space: &Arc<HilbertSpace>,
    params_detuned: &SystemParams,
) -> Result<TargetFamily> {
    let decomp = diagonalize(&HamiltonianTerms::new(space).assemble(params_detuned))?;
    target_from_decomposition(target, space, &decomp)
}

fn target_from_decomposition(
    target: Target,
    space: &Arc<HilbertSpace>,
    decomp: &EigenDecomposition,
) -> Result<TargetFamily> {
    let g = basis_vector(space, &BasisState::new(0, 0, 0, Qubit::Ground))?;
    let n = basis_vector(space, &target.photon_state())?;
    let lg = identify_level(decomp, &g)?;
    let ln = identify_level(decomp, &n)?;
    Ok(TargetFamily {
        ground: align_phase(decomp.vector(lg.index), g.amplitudes()),
        partner: align_phase(decomp.vector(ln.index), n.amplitudes()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub target: Target,
    pub gamma: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
    pub pop_a: Vec<f64>,
    pub pop_b: Vec<f64>,
    pub pop_c: Vec<f64>,
    pub pop_qubit: Vec<f64>,
    pub omega_q: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub final_fidelity: f64,
    pub phi_star: f64,
    /// Purity of the dressed qubit at the end: each retained eigenstate is
    /// mapped onto its bare label before tracing out the modes.
    pub qubit_purity: f64,
    /// Purity of the bare qubit at the end, limited by the dressing itself.
    pub bare_qubit_purity: f64,
    pub integrity: IntegrityReport,
    /// Largest observable change under step halving, over all segments.
    pub convergence_error: f64,
    /// Largest population in the retained levels within the upper half of
    /// the energy margin; should stay negligible.
    pub buffer_population: f64,
}

#[derive(Debug, Clone)]
struct Plateau {
    omega_q: f64,
    /// Columns: plateau eigenvectors in working coordinates.
    rotation: DMatrix<C64>,
    energies: Vec<f64>,
    sigma_z: DMatrix<C64>,
    quadratures: [DMatrix<C64>; 4],
    lowering: [DMatrix<C64>; 4],
    numbers: [DMatrix<C64>; 4],
    targets: TargetFamily,
    /// Levels in the upper half of the energy margin.
    buffer: Vec<usize>,
    /// Bare label of each level and the phase of its overlap with it.
    labels: Vec<(BasisState, C64)>,
}

impl Plateau {
    fn new(
        omega_q: f64,
        rotation: DMatrix<C64>,
        energies: Vec<f64>,
        working: &WorkingOperators,
        targets: &TargetFamily,
        margin: f64,
    ) -> Plateau {
        let to = |m: &DMatrix<C64>| rotation.adjoint() * m * &rotation;
        let quadratures = working.quadratures.clone().map(|q| to(&q));
        let lowering = quadratures.clone().map(|q| lowering_part(&energies, &q));
        let numbers = lowering.clone().map(|o| o.adjoint() * o);
        let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let buffer = (0..energies.len())
            .filter(|&k| energies[k] > top - 0.5 * margin)
            .collect();
        let labels = label_levels(&working.space, &(&working.basis * &rotation));
        Plateau {
            omega_q,
            sigma_z: to(&working.sigma_z),
            targets: targets.project(&rotation),
            rotation,
            energies,
            quadratures,
            lowering,
            numbers,
            buffer,
            labels,
        }
    }

    fn dissipators(&self, rates: [f64; 4]) -> Dissipators {
        channels(&self.lowering, rates)
    }

    fn observables(&self) -> Vec<DMatrix<C64>> {
        self.numbers
            .iter()
            .cloned()
            .chain(self.targets.observables())
            .collect()
    }
}

fn channels(lowering: &[DMatrix<C64>; 4], rates: [f64; 4]) -> Dissipators {
    let n = lowering[0].nrows();
    let list = lowering
        .iter()
        .zip(rates)
        .map(|(o, rate)| CollapseChannel {
            operator: o.clone(),
            rate,
        })
        .collect();
    Dissipators::new(n, list).expect("shapes and rates checked")
}

/// `sigma_z` and the quadratures `o + o^+` of `a, b, c, sigma_-` in working
/// coordinates.
#[derive(Debug, Clone)]
struct WorkingOperators {
    space: Arc<HilbertSpace>,
    basis: DMatrix<C64>,
    sigma_z: DMatrix<C64>,
    quadratures: [DMatrix<C64>; 4],
}

/// Everything that does not depend on the decay rates.
#[derive(Debug, Clone)]
pub struct PreparedProtocol {
    config: ProtocolConfig,
    space: Arc<HilbertSpace>,
    crossing: CrossingInfo,
    schedule: TuningSchedule,
    hold: f64,
    t_end: f64,
    /// Working basis: retained resonant eigenvectors as columns.
    basis: DMatrix<C64>,
    resonant: Plateau,
    detuned: Plateau,
    /// Bare `{|000g>, |000e>}` to working coordinates.
    dressing: DMatrix<C64>,
    grid: Vec<f64>,
}

impl PreparedProtocol {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let target = config.target;
        let space = build_space(config.cutoffs(), config.excitation_cap)?;
        let template = config.system_params(config.params.omega_q);
        if config.target == Target::Ghz && config.params.theta != 0.0 {
            log::warn!("GHZ runs use theta = 0; configured theta ignored");
        }
        let crossing = find_avoided_crossing(
            &space,
            &template,
            target.resonance(&template),
            config.search_half_window,
            [BasisState::new(0, 0, 0, Qubit::Excited), target.photon_state()],
        )?;
        let hold = match config.hold {
            Some(h) => h,
            None if crossing.g_eff_numeric > MIN_G_EFF * config.params.omega_a => FRAC_PI_2 / crossing.g_eff_numeric,
            None => {
                return Err(Error::invalid(
                    "effective coupling vanishes; set the hold time explicitly",
                ))
            }
        };
        let ramp = config.ramp_duration();
        if hold < ramp / 2.0 {
            return Err(Error::invalid(format!(
                "hold {hold} is shorter than half the ramp ({ramp})"
            )));
        }
        let omega_r = crossing.omega_q_star;
        let schedule = TuningSchedule {
            omega_q_initial: omega_r,
            delta_omega_q: config.delta_omega_q,
            t_on: config.t_on,
            t_i: config.t_on + hold - ramp / 2.0,
            ramp_rate: config.ramp_rate,
        };
        schedule.validate()?;
        let t_end = schedule.t_f() + config.t_post;

        let terms = HamiltonianTerms::new(&space);
        let resonant_params = template.with_omega_q(omega_r);
        let detuned_params = template.with_omega_q(schedule.omega_q_final());
        let full_r = diagonalize(&terms.assemble(&resonant_params))?;
        let full_d = diagonalize(&terms.assemble(&detuned_params))?;

        let pair_top = crossing
            .level_indices
            .iter()
            .map(|&l| full_r.energies[l])
            .fold(f64::NEG_INFINITY, f64::max);
        let ceiling = pair_top + config.energy_margin;
        let keep = full_r.energies.iter().take_while(|&&e| e <= ceiling).count();
        let basis = full_r.vectors.columns(0, keep).into_owned();
        log::info!(
            "{target}: {keep} of {} levels below {ceiling:.4}",
            space.dimension()
        );

        let bare_ops = [
            mode_annihilation(&space, Mode::A),
            mode_annihilation(&space, Mode::B),
            mode_annihilation(&space, Mode::C),
            qubit_operator(&space, QubitOp::SigmaMinus),
        ];
        let working = WorkingOperators {
            space: space.clone(),
            basis: basis.clone(),
            sigma_z: basis.adjoint() * terms.sigma_z().matrix() * &basis,
            quadratures: bare_ops.map(|o| eigenbasis_quadrature(&basis, o.matrix())),
        };

        let targets_full = target_from_decomposition(target, &space, &full_d)?;
        let targets_w = targets_full.project(&basis);
        let resonant = Plateau::new(
            omega_r,
            DMatrix::identity(keep, keep),
            full_r.energies[..keep].to_vec(),
            &working,
            &targets_w,
            config.energy_margin,
        );

        // detuned Hamiltonian projected on the working span
        let mut h_d = DMatrix::from_diagonal(&DVector::from_iterator(
            keep,
            resonant.energies.iter().map(|&e| C64::new(e, 0.0)),
        ));
        h_d += &working.sigma_z * C64::new(0.5 * (schedule.omega_q_final() - omega_r), 0.0);
        let proj_d = diagonalize_hermitian(&hermitize(h_d))?;
        let detuned = Plateau::new(
            schedule.omega_q_final(),
            proj_d.vectors,
            proj_d.energies,
            &working,
            &targets_w,
            config.energy_margin,
        );

        let [g0, e0] = dressed_start_states(&space, &full_r, target)?;
        let dressing = DMatrix::from_columns(&[basis.adjoint() * g0, basis.adjoint() * e0]);

        let mut grid: Vec<f64> = (0..)
            .map(|k| k as f64 * config.sample_dt)
            .take_while(|&t| t < t_end)
            .chain([config.t_on, config.t_on + hold, t_end])
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        Ok(PreparedProtocol {
            config: config.clone(),
            space,
            crossing,
            schedule,
            hold,
            t_end,
            basis,
            resonant,
            detuned,
            dressing,
            grid,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn crossing(&self) -> &CrossingInfo {
        &self.crossing
    }

    pub fn schedule(&self) -> &TuningSchedule {
        &self.schedule
    }

    pub fn hold(&self) -> f64 {
        self.hold
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of retained eigenstates.
    pub fn working_dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.grid
    }

    /// Runs the protocol with qubit decay `gamma` and mode decay `kappa`.
    /// Independent runs with mode decay `gamma / 2`, in input order.
    pub fn sweep(&self, gammas: &[f64]) -> Result<Vec<SimResult>> {
        if gammas.is_empty() {
            return Err(Error::invalid("decay-rate list is empty"));
        }
        if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::invalid(format!("invalid decay rate {g}")));
        }
        gammas.par_iter().map(|&g| self.run(g, g / 2.0)).collect()
    }

    pub fn run(&self, gamma: f64, kappa: f64) -> Result<SimResult> {
        if !(gamma >= 0.0 && kappa >= 0.0 && gamma.is_finite() && kappa.is_finite()) {
            return Err(Error::invalid("decay rates must be non-negative"));
        }
        let rates = [kappa, kappa, kappa, gamma];
        let cfg = &self.config;
        let t_on = cfg.t_on;
        let t_mid = t_on + self.hold;
        let mut out = Recorder::new(self, gamma, kappa);

        // bare qubit before the coupling is switched on
        let plus = DVector::from_element(2, C64::new(1.0, 0.0));
        let mut rho2 = DensityMatrix::from_pure(&plus)?;
        let pre: Vec<f64> = self.grid.iter().copied().filter(|&t| t <= t_on).collect();
        if pre.len() > 1 {
            let w = self.schedule.omega_q_initial;
            let lower = DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, 0.0, 0.0].map(|x| C64::new(x, 0.0)),
            );
            let sys = QubitAlone {
                hamiltonian: DMatrix::from_diagonal(&DVector::from_vec(vec![
                    C64::new(-w / 2.0, 0.0),
                    C64::new(w / 2.0, 0.0),
                ])),
                dissipators: Dissipators::new(
                    2,
                    vec![CollapseChannel {
                        operator: lower,
                        rate: gamma,
                    }],
                )?,
            };
            let m = &self.dressing;
            let options = EvolveOptions {
                dt: cfg.dt,
                frame: Some(vec![-w / 2.0, w / 2.0]),
                convergence_tol: cfg.convergence_tol,
                observables: self
                    .resonant
                    .observables()
                    .iter()
                    .map(|o| m.adjoint() * o * m)
                    .collect(),
                ..EvolveOptions::default()
            };
            let ev = evolve(&rho2, &sys, &pre, &options)?;
            out.note(&ev.integrity, ev.convergence_error);
            for (k, (&t, r)) in pre.iter().zip(&ev.states).enumerate() {
                if k + 1 < pre.len() {
                    out.record(t, &r.transform(m), &self.resonant)?;
                }
            }
            rho2 = ev.states.last().expect("non-empty").clone();
        }
        let rho_on = rho2.transform(&self.dressing);

        let seg1: Vec<f64> = self
            .grid
            .iter()
            .copied()
            .filter(|&t| t >= t_on && t <= t_mid)
            .collect();
        let rho_mid = self.segment(&self.resonant, &rho_on, &seg1, rates, &mut out, false)?;
        let rho_switch = rho_mid.transform(&self.detuned.rotation.adjoint());
        let seg2: Vec<f64> = self.grid.iter().copied().filter(|&t| t >= t_mid).collect();
        let rho_end = self.segment(&self.detuned, &rho_switch, &seg2, rates, &mut out, true)?;

        let full = rho_end
            .transform(&self.detuned.rotation)
            .transform(&self.basis);
        out.finish(
            labelled_qubit_purity(&rho_end, &self.detuned.labels),
            qubit_purity(&self.space, &full),
        )
    }

    fn segment(
        &self,
        plateau: &Plateau,
        rho0: &DensityMatrix,
        grid: &[f64],
        rates: [f64; 4],
        out: &mut Recorder,
        include_last: bool,
    ) -> Result<DensityMatrix> {
        if grid.len() < 2 {
            if include_last {
                out.record(grid[0], rho0, plateau)?;
            }
            return Ok(rho0.clone());
        }
        let sys = Segment {
            plateau,
            schedule: &self.schedule,
            dissipators: plateau.dissipators(rates),
            rates,
            policy: self.config.channel_policy,
        };
        let options = EvolveOptions {
            dt: self.config.dt,
            frame: Some(plateau.energies.clone()),
            convergence_tol: self.config.convergence_tol,
            observables: plateau.observables(),
            ..EvolveOptions::default()
        };
        let ev = evolve(rho0, &sys, grid, &options)?;
        out.note(&ev.integrity, ev.convergence_error);
        let n = grid.len();
        for (k, (&t, r)) in grid.iter().zip(&ev.states).enumerate() {
            if k + 1 < n || include_last {
                out.record(t, r, plateau)?;
            }
        }
        Ok(ev.states.last().expect("non-empty").clone())
    }
}

fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    (&m + m.adjoint()).scale(0.5)
}

struct Recorder<'a> {
    prepared: &'a PreparedProtocol,
    result: SimResult,
}

impl<'a> Recorder<'a> {
    fn new(prepared: &'a PreparedProtocol, gamma: f64, kappa: f64) -> Self {
        Recorder {
            prepared,
            result: SimResult {
                target: prepared.config.target,
                gamma,
                kappa,
                times: Vec::new(),
                pop_a: Vec::new(),
                pop_b: Vec::new(),
                pop_c: Vec::new(),
                pop_qubit: Vec::new(),
                omega_q: Vec::new(),
                fidelity: Vec::new(),
                final_fidelity: f64::NAN,
                phi_star: f64::NAN,
                qubit_purity: f64::NAN,
                bare_qubit_purity: f64::NAN,
                integrity: IntegrityReport {
                    trace_error: 0.0,
                    hermiticity_error: 0.0,
                    min_eigenvalue: f64::INFINITY,
                },
                convergence_error: 0.0,
                buffer_population: 0.0,
            },
        }
    }

    fn note(&mut self, integrity: &IntegrityReport, convergence: f64) {
        self.result.integrity = self.result.integrity.worst(*integrity);
        self.result.convergence_error = self.result.convergence_error.max(convergence);
    }

    fn record(&mut self, t: f64, rho: &DensityMatrix, plateau: &Plateau) -> Result<()> {
        let r = &mut self.result;
        let pops = plateau
            .numbers
            .iter()
            .map(|n| population_from_number(rho, n))
            .collect::<Result<Vec<_>>>()?;
        r.times.push(t);
        r.pop_a.push(pops[0]);
        r.pop_b.push(pops[1]);
        r.pop_c.push(pops[2]);
        r.pop_qubit.push(pops[3]);
        r.omega_q
            .push(qubit_frequency_at(&self.prepared.schedule, t));
        let (f, phi) = fidelity(rho, &plateau.targets);
        r.fidelity.push(f);
        r.final_fidelity = f;
        r.phi_star = phi;
        let buffer: f64 = plateau
            .buffer
            .iter()
            .map(|&k| rho.matrix()[(k, k)].re)
            .sum();
        r.buffer_population = r.buffer_population.max(buffer);
        Ok(())
    }

    fn finish(mut self, qubit_purity: f64, bare_qubit_purity: f64) -> Result<SimResult> {
        self.result.qubit_purity = qubit_purity;
        self.result.bare_qubit_purity = bare_qubit_purity;
        if self.result.buffer_population > 1e-3 {
            log::warn!(
                "population {:.3e} reached the top of the retained levels; raise the energy margin",
                self.result.buffer_population
            );
        }
        Ok(self.result)
    }
}

/// Assigns each column of `vectors` (states in the bare basis) a distinct
/// bare label, greedily by decreasing overlap, and records the phase of that
/// overlap.
pub fn label_levels(space: &Arc<HilbertSpace>, vectors: &DMatrix<C64>) -> Vec<(BasisState, C64)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for k in 0..vectors.ncols() {
        for i in 0..vectors.nrows() {
            let w = vectors[(i, k)].norm_sqr();
            if w > 1e-12 {
                candidates.push((w, k, i));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut labels: Vec<Option<(BasisState, C64)>> = vec![None; vectors.ncols()];
    let mut taken = vec![false; vectors.nrows()];
    for (_, k, i) in candidates {
        if labels[k].is_none() && !taken[i] {
            taken[i] = true;
            let z = vectors[(i, k)];
            labels[k] = Some((space.basis()[i], z / z.norm()));
        }
    }
    labels
        .into_iter()
        .map(|l| l.expect("every level has some bare weight"))
        .collect()
}

/// Qubit purity after relabelling every level by its bare counterpart: the
/// qubit factor of `sum rho_kl |label_k><label_l|`, with the labelled states
/// phase-aligned to their bare labels.
pub fn labelled_qubit_purity(rho: &DensityMatrix, labels: &[(BasisState, C64)]) -> f64 {
    let m = rho.matrix();
    let mut q = DMatrix::<C64>::zeros(2, 2);
    for (k, (sk, uk)) in labels.iter().enumerate() {
        for (l, (sl, ul)) in labels.iter().enumerate() {
            if sk.photons == sl.photons {
                q[(sk.qubit.level(), sl.qubit.level())] += uk * m[(k, l)] * ul.conj();
            }
        }
    }
    (&q * &q).trace().re
}

/// Purity of the qubit after tracing out the modes.
pub fn qubit_purity(space: &Arc<HilbertSpace>, rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let mut q = DMatrix::<C64>::zeros(2, 2);
    for (i, s) in space.basis().iter().enumerate() {
        let flipped = BasisState {
            qubit: s.qubit.flipped(),
            ..*s
        };
        q[(s.qubit.level(), s.qubit.level())] += m[(i, i)];
        if let Some(j) = space.index_of(&flipped) {
            q[(s.qubit.level(), flipped.qubit.level())] += m[(i, j)];
        }
    }
    (&q * &q).trace().re
}

struct QubitAlone {
    hamiltonian: DMatrix<C64>,
    dissipators: Dissipators,
}

impl OpenSystem for QubitAlone {
    fn dimension(&self) -> usize {
        2
    }

    fn hamiltonian(&self, _t: f64) -> Cow<'_, DMatrix<C64>> {
        Cow::Borrowed(&self.hamiltonian)
    }

    fn dissipators(&self, _t: f64) -> Cow<'_, Dissipators> {
        Cow::Borrowed(&self.dissipators)
    }
}

struct Segment<'a> {
    plateau: &'a Plateau,
    schedule: &'a TuningSchedule,
    dissipators: Dissipators,
    rates: [f64; 4],
    policy: ChannelPolicy,
}

impl Segment<'_> {
    fn hamiltonian_matrix(&self, t: f64) -> DMatrix<C64> {
        let p = self.plateau;
        let shift = qubit_frequency_at(self.schedule, t) - p.omega_q;
        let mut h = p.sigma_z.clone() * C64::new(0.5 * shift, 0.0);
        for (k, e) in p.energies.iter().enumerate() {
            h[(k, k)] += C64::new(*e, 0.0);
        }
        h
    }
}

impl OpenSystem for Segment<'_> {
    fn dimension(&self) -> usize {
        self.plateau.energies.len()
    }

    fn hamiltonian(&self, t: f64) -> Cow<'_, DMatrix<C64>> {
        Cow::Owned(self.hamiltonian_matrix(t))
    }

    fn dissipators(&self, t: f64) -> Cow<'_, Dissipators> {
        let in_ramp = t > self.schedule.t_i && t < self.schedule.t_f();
        if self.policy == ChannelPolicy::PlateauSwitch || !in_ramp || self.rates == [0.0; 4] {
            return Cow::Borrowed(&self.dissipators);
        }
        let h = hermitize(self.hamiltonian_matrix(t));
        let d = diagonalize_hermitian(&h).expect("projected Hamiltonian is Hermitian");
        let v = &d.vectors;
        let lowering = self
            .plateau
            .quadratures
            .clone()
            .map(|q| v * lowering_part(&d.energies, &(v.adjoint() * q * v)) * v.adjoint());
        Cow::Owned(channels(&lowering, self.rates))
    }
}

/// Builds the setup and runs it with the configured decay rates.
pub fn run_protocol(config: &ProtocolConfig) -> Result<SimResult> {
    PreparedProtocol::new(config)?.run(config.gamma, config.kappa_value())
}

/// Independent runs for each qubit decay rate `gamma`, with mode decay
/// `gamma / 2`. Results keep the order of `gammas`.
pub fn decoherence_sweep(config: &ProtocolConfig, gammas: &[f64]) -> Result<Vec<SimResult>> {
    if gammas.is_empty() {
        return Err(Error::invalid("decay-rate list is empty"));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::invalid(format!("invalid decay rate {g}")));
    }
    PreparedProtocol::new(config)?.sweep(gammas)
}
