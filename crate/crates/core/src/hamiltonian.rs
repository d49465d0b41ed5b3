//! Generalized quantum Rabi Hamiltonian
//!
//! ```text
//! H = sum_j w_j a_j^+ a_j + (w_q / 2) sz
//!     + [sum_j g_j (a_j^+ + a_j)] (sx cos(theta) + sz sin(theta))
//! ```
//!
//! and the qubit-frequency schedule used by the protocol.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hilbert::{
    mode_annihilation, number_operator, qubit_operator, HilbertSpace, Mode, OperatorMatrix,
    QubitOp,
};
use crate::{Error, Result};

/// Frequencies, couplings, mixing angle and decay rates. All in units of
/// `omega_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_c: f64,
    pub omega_q: f64,
    pub g_a: f64,
    pub g_b: f64,
    pub g_c: f64,
    pub theta: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_c: f64,
    pub gamma: f64,
}

impl Default for SystemParams {
    /// Mode frequencies and coupling of the level diagram: `omega_b = 1.5`,
    /// `omega_c = 1.75`, `g = 0.1` on all modes, `theta = pi/6`, qubit at the
    /// a+b resonance, no losses.
    fn default() -> Self {
        SystemParams {
            omega_a: 1.0,
            omega_b: 1.5,
            omega_c: 1.75,
            omega_q: 2.5,
            g_a: 0.1,
            g_b: 0.1,
            g_c: 0.1,
            theta: std::f64::consts::FRAC_PI_6,
            kappa_a: 0.0,
            kappa_b: 0.0,
            kappa_c: 0.0,
            gamma: 0.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let freqs = [
            ("omega_a", self.omega_a),
            ("omega_b", self.omega_b),
            ("omega_c", self.omega_c),
            ("omega_q", self.omega_q),
        ];
        for (name, w) in freqs {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {w}")));
            }
        }
        let nonneg = [
            ("g_a", self.g_a),
            ("g_b", self.g_b),
            ("g_c", self.g_c),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_c", self.kappa_c),
            ("gamma", self.gamma),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=FRAC_PI_2).contains(&self.theta) {
            return Err(Error::invalid(format!(
                "theta must lie in [0, pi/2], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn omega(&self, mode: Mode) -> f64 {
        match mode {
            Mode::A => self.omega_a,
            Mode::B => self.omega_b,
            Mode::C => self.omega_c,
        }
    }

    pub fn coupling(&self, mode: Mode) -> f64 {
        match mode {
            Mode::A => self.g_a,
            Mode::B => self.g_b,
            Mode::C => self.g_c,
        }
    }

    pub fn kappa(&self, mode: Mode) -> f64 {
        match mode {
            Mode::A => self.kappa_a,
            Mode::B => self.kappa_b,
            Mode::C => self.kappa_c,
        }
    }

    pub fn with_couplings(mut self, g: [f64; 3]) -> Self {
        [self.g_a, self.g_b, self.g_c] = g;
        self
    }

    pub fn with_omega_q(mut self, omega_q: f64) -> Self {
        self.omega_q = omega_q;
        self
    }

    /// Qubit rate `gamma` with all mode rates set to `gamma / 2`.
    pub fn with_decoherence(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self.kappa_a = gamma / 2.0;
        self.kappa_b = gamma / 2.0;
        self.kappa_c = gamma / 2.0;
        self
    }

    pub fn uncoupled(self) -> Self {
        self.with_couplings([0.0; 3])
    }
}

/// Bare operators the Hamiltonian is a linear combination of. Building these
/// once makes repeated assembly (level scans, golden-section searches, the
/// time-dependent Hamiltonian) a handful of matrix additions.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    space: Arc<HilbertSpace>,
    number: [OperatorMatrix; 3],
    sigma_z: OperatorMatrix,
    /// `(a_j + a_j^+) sx`
    transverse: [OperatorMatrix; 3],
    /// `(a_j + a_j^+) sz`
    longitudinal: [OperatorMatrix; 3],
}

impl HamiltonianTerms {
    pub fn new(space: &Arc<HilbertSpace>) -> Self {
        let sx = qubit_operator(space, QubitOp::SigmaX);
        let sz = qubit_operator(space, QubitOp::SigmaZ);
        let quadrature = Mode::ALL.map(|m| {
            let a = mode_annihilation(space, m);
            &a + &a.adjoint()
        });
        HamiltonianTerms {
            space: space.clone(),
            number: Mode::ALL.map(|m| number_operator(space, m)),
            transverse: quadrature.clone().map(|x| &x * &sx),
            longitudinal: quadrature.map(|x| &x * &sz),
            sigma_z: sz,
        }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn sigma_z(&self) -> &OperatorMatrix {
        &self.sigma_z
    }

    pub fn assemble(&self, params: &SystemParams) -> OperatorMatrix {
        let (sin, cos) = params.theta.sin_cos();
        let mut m = self.sigma_z.matrix().scale(params.omega_q / 2.0);
        for mode in Mode::ALL {
            let j = mode.index();
            m += self.number[j].matrix().scale(params.omega(mode));
            let g = params.coupling(mode);
            if g != 0.0 {
                m += self.transverse[j].matrix().scale(g * cos);
                m += self.longitudinal[j].matrix().scale(g * sin);
            }
        }
        OperatorMatrix::from_matrix(self.space.clone(), m).expect("terms share the space")
    }
}

pub fn build_hamiltonian(space: &Arc<HilbertSpace>, params: &SystemParams) -> OperatorMatrix {
    HamiltonianTerms::new(space).assemble(params)
}

/// Smoothed-step qubit-frequency schedule with an instantaneous coupling
/// switch-on at `t_on`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningSchedule {
    pub omega_q_initial: f64,
    pub delta_omega_q: f64,
    pub t_on: f64,
    pub t_i: f64,
    /// Ramp smoothness frequency `A`; the ramp lasts `pi / (2 A)`.
    pub ramp_rate: f64,
}

impl TuningSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_rate.is_finite() && self.ramp_rate > 0.0) {
            return Err(Error::invalid("ramp rate A must be positive"));
        }
        if !(self.t_on.is_finite() && self.t_on >= 0.0) {
            return Err(Error::invalid("t_on must be non-negative"));
        }
        if !(self.t_i >= self.t_on) {
            return Err(Error::invalid(format!(
                "ramp start t_i = {} precedes coupling switch-on t_on = {}",
                self.t_i, self.t_on
            )));
        }
        if !(self.omega_q_initial > 0.0 && self.omega_q_initial + self.delta_omega_q > 0.0) {
            return Err(Error::invalid(
                "qubit frequency must stay positive over the schedule",
            ));
        }
        Ok(())
    }

    pub fn t_f(&self) -> f64 {
        self.t_i + FRAC_PI_2 / self.ramp_rate
    }

    pub fn ramp_midpoint(&self) -> f64 {
        0.5 * (self.t_i + self.t_f())
    }

    pub fn omega_q_final(&self) -> f64 {
        self.omega_q_initial + self.delta_omega_q
    }

    pub fn coupled_at(&self, t: f64) -> bool {
        t >= self.t_on
    }
}

fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `w_q(t) = w_qi + dw_q { sin^2[A(t - t_i)] H(t - t_i) + sin^2[A(t - t_f)] H(t - t_f) }`
pub fn qubit_frequency_at(schedule: &TuningSchedule, t: f64) -> f64 {
    let a = schedule.ramp_rate;
    let (t_i, t_f) = (schedule.t_i, schedule.t_f());
    let rise = (a * (t - t_i)).sin().powi(2) * step(t - t_i);
    let tail = (a * (t - t_f)).sin().powi(2) * step(t - t_f);
    schedule.omega_q_initial + schedule.delta_omega_q * (rise + tail)
}

/// Parameters in effect at time `t`: scheduled qubit frequency, and couplings
/// zeroed before `t_on`.
pub fn params_at(params: &SystemParams, schedule: &TuningSchedule, t: f64) -> SystemParams {
    let p = params.with_omega_q(qubit_frequency_at(schedule, t));
    if schedule.coupled_at(t) {
        p
    } else {
        p.uncoupled()
    }
}

pub fn hamiltonian_at(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    schedule: &TuningSchedule,
    t: f64,
) -> OperatorMatrix {
    build_hamiltonian(space, &params_at(params, schedule, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{bare_state, build_space, max_abs, Qubit};
    use crate::C64;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_6, PI};

    fn schedule() -> TuningSchedule {
        TuningSchedule {
            omega_q_initial: 2.5,
            delta_omega_q: -0.5,
            t_on: 5.0,
            t_i: 100.0,
            ramp_rate: PI / 20.0,
        }
    }

    #[test]
    fn uncoupled_is_diagonal_bare_energies() {
        let space = build_space([2, 2, 1], None).unwrap();
        let p = SystemParams::default().uncoupled();
        let h = build_hamiltonian(&space, &p);
        for (i, s) in space.basis().iter().enumerate() {
            let e = s.photons[0] as f64 * p.omega_a
                + s.photons[1] as f64 * p.omega_b
                + s.photons[2] as f64 * p.omega_c
                + s.qubit.sigma_z() * p.omega_q / 2.0;
            assert!((h.matrix()[(i, i)] - C64::new(e, 0.0)).norm() < 1e-14);
        }
        let off = h.matrix() - nalgebra::DMatrix::from_diagonal(&h.matrix().diagonal());
        assert_eq!(max_abs(&off), 0.0);
    }

    #[test]
    fn no_direct_element_between_vacuum_and_two_photons() {
        let space = build_space([4, 4, 4], None).unwrap();
        let h = build_hamiltonian(&space, &SystemParams::default());
        let vac = bare_state(&space, 0, 0, 0, Qubit::Ground).unwrap();
        let psi1 = bare_state(&space, 1, 1, 0, Qubit::Ground).unwrap();
        assert_eq!(h.element(&vac, &psi1).norm(), 0.0);
        let e = bare_state(&space, 0, 0, 0, Qubit::Excited).unwrap();
        assert_eq!(h.element(&e, &psi1).norm(), 0.0);
    }

    #[test]
    fn theta_zero_is_transverse_rabi_form() {
        let space = build_space([2, 2, 2], None).unwrap();
        let p = SystemParams {
            theta: 0.0,
            ..SystemParams::default()
        };
        let h = build_hamiltonian(&space, &p);
        let sx = qubit_operator(&space, QubitOp::SigmaX);
        let mut expected = build_hamiltonian(&space, &p.uncoupled());
        for m in Mode::ALL {
            let a = mode_annihilation(&space, m);
            let x = &a + &a.adjoint();
            expected = &expected + &(&x * &sx).scale(p.coupling(m));
        }
        assert!(max_abs(&(h.matrix() - expected.matrix())) < 1e-14);
    }

    #[test]
    fn schedule_closed_form_points() {
        let s = schedule();
        let a = s.ramp_rate;
        assert_eq!(qubit_frequency_at(&s, 0.0), 2.5);
        assert_eq!(qubit_frequency_at(&s, s.t_i), 2.5);
        assert!((qubit_frequency_at(&s, s.t_i + PI / (4.0 * a)) - 2.25).abs() < 1e-14);
        assert!((qubit_frequency_at(&s, s.t_f()) - 2.0).abs() < 1e-14);
        for k in 0..50 {
            let t = s.t_f() + 0.73 * k as f64;
            assert!((qubit_frequency_at(&s, t) - 2.0).abs() < 1e-13);
        }
        // numerical continuity across the ramp
        let mut prev = qubit_frequency_at(&s, s.t_i - 1.0);
        let n = 4000;
        for k in 0..=n {
            let t = s.t_i - 1.0 + (s.t_f() - s.t_i + 2.0) * k as f64 / n as f64;
            let w = qubit_frequency_at(&s, t);
            assert!((w - prev).abs() < 1e-3);
            prev = w;
        }
    }

    #[test]
    fn hamiltonian_at_segments() {
        let space = build_space([2, 2, 1], None).unwrap();
        let p = SystemParams::default();
        let s = schedule();
        let before = hamiltonian_at(&space, &p, &s, 1.0);
        assert_eq!(before, build_hamiltonian(&space, &p.uncoupled()));
        let plateau1 = hamiltonian_at(&space, &p, &s, 10.0);
        let plateau2 = hamiltonian_at(&space, &p, &s, 90.0);
        assert_eq!(plateau1, plateau2);
        assert_eq!(plateau1, build_hamiltonian(&space, &p));
        let after = hamiltonian_at(&space, &p, &s, s.t_f() + 3.0);
        let expected = build_hamiltonian(&space, &p.with_omega_q(2.0));
        assert!(max_abs(&(after.matrix() - expected.matrix())) < 1e-13);
    }

    #[test]
    fn parity_conserved_without_longitudinal_coupling() {
        let space = build_space([3, 3, 3], None).unwrap();
        let p = SystemParams {
            theta: 0.0,
            g_a: 0.12,
            g_b: 0.12,
            g_c: 0.12,
            ..SystemParams::default()
        };
        let h = build_hamiltonian(&space, &p);
        let parity = space.diagonal(|s| {
            let n: usize = s.photons.iter().sum();
            s.qubit.sigma_z() * if n % 2 == 0 { 1.0 } else { -1.0 }
        });
        assert!(h.commutator(&parity).max_abs() < 1e-13);

        let p = SystemParams {
            theta: FRAC_PI_6,
            ..p
        };
        let h = build_hamiltonian(&space, &p);
        assert!(h.commutator(&parity).max_abs() > 1e-3);
    }

    #[test]
    fn validation() {
        assert!(SystemParams::default().validate().is_ok());
        let bad = SystemParams {
            theta: 2.0,
            ..SystemParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemParams {
            g_b: -0.1,
            ..SystemParams::default()
        };
        assert!(bad.validate().is_err());
        let mut s = schedule();
        s.t_i = 1.0;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn hermitian_for_all_times(t in 0.0f64..200.0, theta in 0.0f64..FRAC_PI_2, g in 0.0f64..0.3) {
            let space = build_space([2, 2, 2], None).unwrap();
            let p = SystemParams { theta, ..SystemParams::default() }.with_couplings([g, 0.8 * g, 1.1 * g]);
            let h = hamiltonian_at(&space, &p, &schedule(), t);
            prop_assert!(h.hermiticity_error() <= 1e-14);
        }

        #[test]
        fn linear_in_coupling_scale(s in 0.0f64..5.0, theta in 0.0f64..FRAC_PI_2) {
            let space = build_space([2, 2, 2], None).unwrap();
            let p = SystemParams { theta, ..SystemParams::default() }.with_couplings([0.1, 0.07, 0.05]);
            let h0 = build_hamiltonian(&space, &p.uncoupled());
            let h1 = build_hamiltonian(&space, &p);
            let hs = build_hamiltonian(&space, &p.with_couplings([0.1 * s, 0.07 * s, 0.05 * s]));
            let lhs = &hs - &h0;
            let rhs = (&h1 - &h0).scale(s);
            prop_assert!((lhs - rhs).max_abs() < 1e-13);
        }
    }
}
