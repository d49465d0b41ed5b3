//! Run configuration: one flat TOML table shared by all four analyses.
//!
//! Every key is optional. Physics keys default to the protocol defaults of
//! the selected `target`; grid keys default per analysis. Unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use usc_entangle::hamiltonian::SystemParams;
use usc_entangle::protocol::{ChannelPolicy, ProtocolConfig, Target};
use usc_entangle::spectrum::DEFAULT_SCAN_LEVELS;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Spectrum,
    Geff,
    Protocol,
    Sweep,
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Analysis::Spectrum => "spectrum",
            Analysis::Geff => "geff",
            Analysis::Protocol => "protocol",
            Analysis::Sweep => "sweep",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the subcommand when present.
    pub analysis: Option<Analysis>,
    pub target: Option<Target>,

    pub omega_a: Option<f64>,
    pub omega_b: Option<f64>,
    pub omega_c: Option<f64>,
    pub theta: Option<f64>,
    /// Coupling of the modes taking part in the target process. The level
    /// scan couples all three modes with it unless `g_a`, `g_b`, `g_c` are set.
    pub coupling: Option<f64>,
    pub g_a: Option<f64>,
    pub g_b: Option<f64>,
    pub g_c: Option<f64>,

    pub cutoff: Option<usize>,
    pub excitation_cap: Option<usize>,

    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub t_on: Option<f64>,
    pub hold: Option<f64>,
    pub ramp_rate: Option<f64>,
    pub delta_omega_q: Option<f64>,
    pub t_post: Option<f64>,
    pub sample_dt: Option<f64>,
    pub dt: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub energy_margin: Option<f64>,
    pub search_half_window: Option<f64>,
    pub channel_policy: Option<ChannelPolicy>,

    pub omega_q_min: Option<f64>,
    pub omega_q_max: Option<f64>,
    pub omega_q_points: Option<usize>,
    pub levels: Option<usize>,

    pub g_min: Option<f64>,
    pub g_max: Option<f64>,
    pub g_points: Option<usize>,
    /// Explicit coupling grid; excludes `g_min`, `g_max`, `g_points`.
    pub g_values: Option<Vec<f64>>,

    pub gammas: Option<Vec<f64>>,

    pub out: Option<PathBuf>,
}

/// Level-scan grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub params: SystemParams,
    pub cutoff: usize,
    pub excitation_cap: Option<usize>,
    pub omega_q: Vec<f64>,
    pub levels: usize,
}

/// Fully resolved, validated run.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Spectrum(SpectrumSpec),
    Geff {
        protocol: ProtocolConfig,
        g_values: Vec<f64>,
    },
    Protocol(ProtocolConfig),
    Sweep {
        protocol: ProtocolConfig,
        gammas: Vec<f64>,
    },
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        if self.g_a.is_some() || self.g_b.is_some() || self.g_c.is_some() {
            return Err(bad(
                "g_a, g_b, g_c only apply to the level scan; use `coupling` and `target`",
            ));
        }
        let target = self.target.unwrap_or(Target::B110);
        let mut cfg = ProtocolConfig::new(target);
        let p = &mut cfg.params;
        p.omega_a = self.omega_a.unwrap_or(p.omega_a);
        p.omega_b = self.omega_b.unwrap_or(p.omega_b);
        p.omega_c = self.omega_c.unwrap_or(p.omega_c);
        if let Some(theta) = self.theta {
            if target == Target::Ghz && theta != 0.0 {
                return Err(bad("the GHZ process requires theta = 0"));
            }
            p.theta = theta;
        }
        cfg.coupling = self.coupling.unwrap_or(cfg.coupling);
        cfg.cutoff = self.cutoff.unwrap_or(cfg.cutoff);
        cfg.excitation_cap = self.excitation_cap.or(cfg.excitation_cap);
        cfg.gamma = self.gamma.unwrap_or(cfg.gamma);
        cfg.kappa = self.kappa.or(cfg.kappa);
        cfg.t_on = self.t_on.unwrap_or(cfg.t_on);
        cfg.hold = self.hold.or(cfg.hold);
        cfg.ramp_rate = self.ramp_rate.unwrap_or(cfg.ramp_rate);
        cfg.delta_omega_q = self.delta_omega_q.unwrap_or(cfg.delta_omega_q);
        cfg.t_post = self.t_post.unwrap_or(cfg.t_post);
        cfg.sample_dt = self.sample_dt.unwrap_or(cfg.sample_dt);
        cfg.dt = self.dt.unwrap_or(cfg.dt);
        cfg.convergence_tol = self.convergence_tol.unwrap_or(cfg.convergence_tol);
        cfg.energy_margin = self.energy_margin.unwrap_or(cfg.energy_margin);
        cfg.search_half_window = self.search_half_window.unwrap_or(cfg.search_half_window);
        cfg.channel_policy = self.channel_policy.unwrap_or(cfg.channel_policy);
        cfg.params.omega_q = target.resonance(&cfg.system_params(0.0));
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    fn spectrum(&self) -> Result<SpectrumSpec, CliError> {
        let d = SystemParams::default();
        let g = self.coupling.unwrap_or(d.g_a);
        let params = SystemParams {
            omega_a: self.omega_a.unwrap_or(d.omega_a),
            omega_b: self.omega_b.unwrap_or(d.omega_b),
            omega_c: self.omega_c.unwrap_or(d.omega_c),
            theta: self.theta.unwrap_or(d.theta),
            g_a: self.g_a.unwrap_or(g),
            g_b: self.g_b.unwrap_or(g),
            g_c: self.g_c.unwrap_or(g),
            ..d
        };
        params.validate().map_err(|e| bad(e.to_string()))?;
        let lo = self.omega_q_min.unwrap_or(2.0);
        let hi = self.omega_q_max.unwrap_or(4.5);
        let n = self.omega_q_points.unwrap_or(251);
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(bad(format!("invalid omega_q range [{lo}, {hi}]")));
        }
        if n == 0 || (n == 1 && hi != lo) {
            return Err(bad("omega_q_points must be at least 2 for a nonempty range"));
        }
        let cutoff = self.cutoff.unwrap_or(4);
        if cutoff == 0 {
            return Err(bad("cutoff must be at least 1"));
        }
        let levels = self.levels.unwrap_or(DEFAULT_SCAN_LEVELS);
        let dim = 2 * (cutoff + 1).pow(3);
        if levels == 0 || (self.excitation_cap.is_none() && levels > dim) {
            return Err(bad(format!("levels must lie in 1..={dim}")));
        }
        Ok(SpectrumSpec {
            params,
            cutoff,
            excitation_cap: self.excitation_cap,
            omega_q: linspace(lo, hi, n),
            levels,
        })
    }

    fn g_grid(&self) -> Result<Vec<f64>, CliError> {
        let ranged = self.g_min.is_some() || self.g_max.is_some() || self.g_points.is_some();
        let values = match &self.g_values {
            Some(_) if ranged => {
                return Err(bad("give either g_values or g_min/g_max/g_points, not both"))
            }
            Some(v) => v.clone(),
            None => {
                let lo = self.g_min.unwrap_or(0.01);
                let hi = self.g_max.unwrap_or(0.2);
                let n = self.g_points.unwrap_or(20);
                if n == 0 || !(hi >= lo) {
                    return Err(bad(format!("invalid coupling grid [{lo}, {hi}] x {n}")));
                }
                linspace(lo, hi, n)
            }
        };
        if values.is_empty() {
            return Err(bad("coupling grid is empty"));
        }
        if let Some(g) = values.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(bad(format!("coupling grid values must be positive, got {g}")));
        }
        Ok(values)
    }

    /// Validates everything the analysis needs before any computation.
    pub fn resolve(&self, analysis: Analysis) -> Result<Resolved, CliError> {
        if let Some(a) = self.analysis {
            if a != analysis {
                return Err(bad(format!(
                    "config is for the {a} analysis, not {analysis}"
                )));
            }
        }
        match analysis {
            Analysis::Spectrum => Ok(Resolved::Spectrum(self.spectrum()?)),
            Analysis::Geff => Ok(Resolved::Geff {
                g_values: self.g_grid()?,
                protocol: self.protocol()?,
            }),
            Analysis::Protocol => Ok(Resolved::Protocol(self.protocol()?)),
            Analysis::Sweep => {
                let gammas = self
                    .gammas
                    .clone()
                    .ok_or_else(|| bad("the sweep needs a `gammas` list"))?;
                if self.kappa.is_some() {
                    return Err(bad("sweeps set kappa = gamma / 2; remove `kappa`"));
                }
                if gammas.is_empty() {
                    return Err(bad("`gammas` is empty"));
                }
                if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
                    return Err(bad(format!("decay rates must be non-negative, got {g}")));
                }
                Ok(Resolved::Sweep {
                    protocol: self.protocol()?,
                    gammas,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        let Resolved::Protocol(p) = cfg.resolve(Analysis::Protocol).unwrap() else {
            panic!()
        };
        let mut expected = ProtocolConfig::new(Target::B110);
        expected.params.omega_q = 2.5;
        assert_eq!(p, expected);
        let Resolved::Spectrum(s) = cfg.resolve(Analysis::Spectrum).unwrap() else {
            panic!()
        };
        assert_eq!(s.levels, 12);
        assert_eq!(s.omega_q.len(), 251);
        assert_eq!(s.omega_q[250], 4.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("gama = 1e-3"), Err(CliError::Config(_))));
        assert!(RunConfig::parse("target = \"B111\"").is_err());
        assert!(RunConfig::parse("analysis = \"fit\"").is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::parse(
            "target = \"GHZ\"\ngamma = 1e-3\nkappa = 2e-4\ncutoff = 3\nchannel_policy = \"instantaneous\"",
        )
        .unwrap();
        let Resolved::Protocol(p) = cfg.resolve(Analysis::Protocol).unwrap() else {
            panic!()
        };
        assert_eq!(p.target, Target::Ghz);
        assert_eq!(p.kappa_value(), 2e-4);
        assert_eq!(p.cutoff, 3);
        assert_eq!(p.channel_policy, ChannelPolicy::Instantaneous);
        assert_eq!(p.params.omega_q, 4.25);
    }

    #[test]
    fn invalid_values_fail_before_compute() {
        let cases = [
            ("gamma = -1.0", Analysis::Protocol),
            ("dt = 0.0", Analysis::Protocol),
            ("g_a = 0.1", Analysis::Protocol),
            ("target = \"GHZ\"\ntheta = 0.5", Analysis::Protocol),
            ("gammas = []", Analysis::Sweep),
            ("", Analysis::Sweep),
            ("gammas = [1e-3, -1e-3]", Analysis::Sweep),
            ("gammas = [1e-3]\nkappa = 1e-4", Analysis::Sweep),
            ("g_values = [0.1]\ng_max = 0.2", Analysis::Geff),
            ("g_values = [0.0]", Analysis::Geff),
            ("omega_q_min = 3.0\nomega_q_max = 2.0", Analysis::Spectrum),
            ("levels = 0", Analysis::Spectrum),
            ("analysis = \"geff\"", Analysis::Sweep),
        ];
        for (text, analysis) in cases {
            let err = RunConfig::parse(text).unwrap().resolve(analysis).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn explicit_coupling_grid() {
        let cfg = RunConfig::parse("g_values = [0.02, 0.1]").unwrap();
        let Resolved::Geff { g_values, .. } = cfg.resolve(Analysis::Geff).unwrap() else {
            panic!()
        };
        assert_eq!(g_values, vec![0.02, 0.1]);
    }
}
