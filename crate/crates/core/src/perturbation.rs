//! Effective couplings of the higher-order processes that convert one qubit
//! excitation into two or three photons.
//!
//! Two independent routes are provided: the closed forms, and a path sum over
//! chains of bare states connected by single applications of the interaction
//!
//! ```text
//! V = [sum_j g_j (a_j + a_j^+)] (sx cos(theta) + sz sin(theta))
//! ```
//!
//! with every energy denominator evaluated at the resonant qubit frequency.

use std::f64::consts::PI;

use crate::hamiltonian::SystemParams;
use crate::hilbert::{BasisState, Mode, Qubit};
use crate::{Error, Result};

/// Intermediate states closer than this to the initial energy make the sum
/// meaningless.
pub const DENOMINATOR_GUARD: f64 = 1e-6;

/// Relative tolerance of the commensurability warnings.
const COMMENSURABLE_TOL: f64 = 1e-3;

/// Coupling term that mediates a hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vertex {
    /// `sx cos(theta)` part, flips the qubit.
    Transverse,
    /// `sz sin(theta)` part, leaves the qubit alone.
    Longitudinal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub from: BasisState,
    pub to: BasisState,
    pub mode: Mode,
    pub vertex: Vertex,
    /// `<to|V|from>`
    pub element: f64,
}

impl Hop {
    /// Whether the hop keeps the total excitation number (photons plus qubit).
    pub fn conserves_excitations(&self) -> bool {
        self.from.excitations() == self.to.excitations()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPath {
    pub hops: Vec<Hop>,
    /// `E_i - E_n` for each intermediate state, in path order.
    pub denominators: Vec<f64>,
}

impl TransitionPath {
    pub fn order(&self) -> usize {
        self.hops.len()
    }

    pub fn intermediates(&self) -> impl Iterator<Item = BasisState> + '_ {
        self.hops[..self.hops.len() - 1].iter().map(|h| h.to)
    }

    /// Product of the matrix elements over the product of the denominators.
    pub fn contribution(&self) -> f64 {
        let num: f64 = self.hops.iter().map(|h| h.element).product();
        let den: f64 = self.denominators.iter().product();
        num / den
    }
}

/// `sum_j n_j w_j + sz w_q / 2`
pub fn bare_energy(state: &BasisState, params: &SystemParams, omega_q: f64) -> f64 {
    Mode::ALL
        .iter()
        .map(|&m| state.photons_in(m) as f64 * params.omega(m))
        .sum::<f64>()
        + state.qubit.sigma_z() * omega_q / 2.0
}

fn photon_energy(state: &BasisState, params: &SystemParams) -> f64 {
    bare_energy(state, params, 0.0)
}

/// Qubit frequency at which `initial` and `final_state` are degenerate. If
/// both have the same qubit level no such condition exists and the configured
/// `params.omega_q` is returned.
pub fn resonant_omega_q(
    initial: &BasisState,
    final_state: &BasisState,
    params: &SystemParams,
) -> Result<f64> {
    if initial.qubit == final_state.qubit {
        return Ok(params.omega_q);
    }
    let s_i = initial.qubit.sigma_z();
    let s_f = final_state.qubit.sigma_z();
    let w = 2.0 * (photon_energy(final_state, params) - photon_energy(initial, params)) / (s_i - s_f);
    if !(w > 0.0) {
        return Err(Error::invalid(format!(
            "{initial} and {final_state} are never resonant for a positive qubit frequency"
        )));
    }
    Ok(w)
}

/// All single-hop neighbours of `state` with a nonzero interaction element.
pub fn hops_from(state: &BasisState, params: &SystemParams) -> Vec<Hop> {
    let (sin, cos) = params.theta.sin_cos();
    let mut out = Vec::new();
    for mode in Mode::ALL {
        let g = params.coupling(mode);
        if g == 0.0 {
            continue;
        }
        let j = mode.index();
        let n = state.photons[j];
        let mut targets = Vec::with_capacity(2);
        // creation: sqrt(n + 1), annihilation: sqrt(n)
        targets.push((n + 1, ((n + 1) as f64).sqrt()));
        if n > 0 {
            targets.push((n - 1, (n as f64).sqrt()));
        }
        for (n_new, ladder) in targets {
            let mut photons = state.photons;
            photons[j] = n_new;
            let flipped = BasisState {
                photons,
                qubit: state.qubit.flipped(),
            };
            let kept = BasisState {
                photons,
                qubit: state.qubit,
            };
            let transverse = g * ladder * cos;
            if transverse != 0.0 {
                out.push(Hop {
                    from: *state,
                    to: flipped,
                    mode,
                    vertex: Vertex::Transverse,
                    element: transverse,
                });
            }
            let longitudinal = g * ladder * sin * state.qubit.sigma_z();
            if longitudinal != 0.0 {
                out.push(Hop {
                    from: *state,
                    to: kept,
                    mode,
                    vertex: Vertex::Longitudinal,
                    element: longitudinal,
                });
            }
        }
    }
    out
}

/// Every chain of `order` hops from `initial` to `final_state` whose
/// intermediate states avoid both endpoints. Denominators use the resonant
/// qubit frequency of the two endpoints.
pub fn enumerate_paths(
    initial: &BasisState,
    final_state: &BasisState,
    order: usize,
    params: &SystemParams,
) -> Result<Vec<TransitionPath>> {
    if !(2..=3).contains(&order) {
        return Err(Error::invalid(format!(
            "perturbation order {order} is not supported (2 or 3)"
        )));
    }
    params.validate()?;
    let omega_q = resonant_omega_q(initial, final_state, params)?;
    let e_i = bare_energy(initial, params, omega_q);

    let mut paths = Vec::new();
    let mut stack = Vec::with_capacity(order);
    walk(initial, final_state, order, params, &mut stack, &mut paths);

    Ok(paths
        .into_iter()
        .map(|hops| {
            let denominators = hops[..order - 1]
                .iter()
                .map(|h| e_i - bare_energy(&h.to, params, omega_q))
                .collect();
            TransitionPath { hops, denominators }
        })
        .collect())
}

fn walk(
    initial: &BasisState,
    target: &BasisState,
    remaining: usize,
    params: &SystemParams,
    stack: &mut Vec<Hop>,
    out: &mut Vec<Vec<Hop>>,
) {
    let here = stack.last().map_or(*initial, |h| h.to);
    for hop in hops_from(&here, params) {
        if remaining == 1 {
            if hop.to == *target {
                let mut path = stack.clone();
                path.push(hop);
                out.push(path);
            }
        } else if hop.to != *initial && hop.to != *target {
            stack.push(hop);
            walk(initial, target, remaining - 1, params, stack, out);
            stack.pop();
        }
    }
}

/// Effective coupling as the sum of [`TransitionPath::contribution`] over all
/// paths of the given order.
pub fn g_eff_path_sum(
    initial: &BasisState,
    final_state: &BasisState,
    order: usize,
    params: &SystemParams,
) -> Result<f64> {
    let paths = enumerate_paths(initial, final_state, order, params)?;
    let omega_q = resonant_omega_q(initial, final_state, params)?;
    for w in commensurability_warnings(params, omega_q) {
        log::warn!("{w}");
    }
    let guard = DENOMINATOR_GUARD * params.omega_a;
    for path in &paths {
        for (state, &den) in path.intermediates().zip(&path.denominators) {
            if den.abs() < guard {
                return Err(Error::DivergentDenominator {
                    state: state.to_string(),
                    denominator: den,
                });
            }
        }
    }
    Ok(paths.iter().map(TransitionPath::contribution).sum())
}

/// Initial and final bare states of the two-photon process that fills the
/// given pair of modes.
pub fn bell_process(pair: (Mode, Mode)) -> (BasisState, BasisState) {
    let initial = BasisState::new(0, 0, 0, Qubit::Excited);
    let mut photons = [0; 3];
    photons[pair.0.index()] = 1;
    photons[pair.1.index()] = 1;
    (
        initial,
        BasisState {
            photons,
            qubit: Qubit::Ground,
        },
    )
}

pub fn ghz_process() -> (BasisState, BasisState) {
    (
        BasisState::new(0, 0, 0, Qubit::Excited),
        BasisState::new(1, 1, 1, Qubit::Ground),
    )
}

/// `-g_i g_j (w_i + w_j) sin(2 theta) / (w_i w_j)` for the selected pair.
pub fn g_eff_bell_closed(params: &SystemParams, pair: (Mode, Mode)) -> f64 {
    let (i, j) = pair;
    if params.theta == 0.0 {
        log::warn!("theta = 0: without longitudinal coupling the two-photon process vanishes");
    }
    let (wi, wj) = (params.omega(i), params.omega(j));
    -params.coupling(i) * params.coupling(j) * (wi + wj) * (2.0 * params.theta).sin() / (wi * wj)
}

/// `-4 g_a g_b g_c (w_a + w_b + w_c) / [(w_a + w_b)(w_a + w_c)(w_b + w_c)]`
pub fn g_eff_ghz_closed(params: &SystemParams) -> f64 {
    let (wa, wb, wc) = (params.omega_a, params.omega_b, params.omega_c);
    -4.0 * params.g_a * params.g_b * params.g_c * (wa + wb + wc)
        / ((wa + wb) * (wa + wc) * (wb + wc))
}

/// Integer frequency ratios that bring unwanted states close to resonance
/// (qubit at a multiple of a mode frequency, or two modes commensurate).
pub fn commensurability_warnings(params: &SystemParams, omega_q: f64) -> Vec<String> {
    let near_integer = |x: f64| {
        let n = x.round();
        n >= 1.0 && (x - n).abs() < COMMENSURABLE_TOL * x
    };
    let mut out = Vec::new();
    for m in Mode::ALL {
        if params.coupling(m) == 0.0 {
            continue;
        }
        let ratio = omega_q / params.omega(m);
        if near_integer(ratio) {
            out.push(format!(
                "omega_q = {omega_q} is close to {} omega_{m}",
                ratio.round()
            ));
        }
        for n in Mode::ALL {
            if n <= m || params.coupling(n) == 0.0 {
                continue;
            }
            let (hi, lo) = if params.omega(m) >= params.omega(n) {
                (m, n)
            } else {
                (n, m)
            };
            let ratio = params.omega(hi) / params.omega(lo);
            if near_integer(ratio) {
                out.push(format!(
                    "omega_{hi} is close to {} omega_{lo}",
                    ratio.round()
                ));
            }
        }
    }
    out
}

/// Mixing angle that maximizes the two-photon coupling.
pub const OPTIMAL_THETA: f64 = PI / 4.0;
