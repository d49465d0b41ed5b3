//! Front end for the level-scan, effective-coupling, protocol and sweep
//! analyses. Each command turns a validated [`config::Resolved`] run into CSV
//! text with a `#` metadata header.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use usc_entangle::hilbert::{build_space, BasisState, Qubit};
use usc_entangle::protocol::{PreparedProtocol, ProtocolConfig, SimResult};
use usc_entangle::spectrum::{find_avoided_crossing, scan_levels};

pub use config::{Analysis, Resolved, RunConfig, SpectrumSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(usc_entangle::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<usc_entangle::Error> for CliError {
    fn from(e: usc_entangle::Error) -> Self {
        match e {
            usc_entangle::Error::InvalidArgument(msg) => CliError::Config(msg),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Fixed-precision scientific notation, identical on every platform.
pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// CSV text assembled in memory and written once.
#[derive(Debug, Default)]
pub struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let records = std::iter::once(&self.header).chain(&self.rows);
        for record in records {
            writer.write_record(record).expect("writing to memory");
        }
        let body = writer.into_inner().expect("writing to memory");
        out.push_str(std::str::from_utf8(&body).expect("cells are UTF-8"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn echo_protocol(table: &mut Table, cfg: &ProtocolConfig) {
    let p = cfg.system_params(cfg.params.omega_q);
    table.meta("target", cfg.target);
    table.meta("omega_a", num(p.omega_a));
    table.meta("omega_b", num(p.omega_b));
    table.meta("omega_c", num(p.omega_c));
    table.meta("theta", num(p.theta));
    table.meta("couplings", format!("[{}, {}, {}]", num(p.g_a), num(p.g_b), num(p.g_c)));
    table.meta("cutoffs", format!("{:?}", cfg.cutoffs()));
    table.meta(
        "excitation_cap",
        cfg.excitation_cap.map_or("none".to_string(), |c| c.to_string()),
    );
    table.meta("gamma", num(cfg.gamma));
    table.meta("kappa", num(cfg.kappa_value()));
    table.meta("t_on", num(cfg.t_on));
    table.meta("hold", cfg.hold.map_or("auto".to_string(), num));
    table.meta("ramp_rate", num(cfg.ramp_rate));
    table.meta("delta_omega_q", num(cfg.delta_omega_q));
    table.meta("t_post", num(cfg.t_post));
    table.meta("sample_dt", num(cfg.sample_dt));
    table.meta("dt", num(cfg.dt));
    table.meta("convergence_tol", num(cfg.convergence_tol));
    table.meta("energy_margin", num(cfg.energy_margin));
    table.meta("search_half_window", num(cfg.search_half_window));
    table.meta("channel_policy", format!("{:?}", cfg.channel_policy));
}

fn echo_schedule(table: &mut Table, prepared: &PreparedProtocol) {
    let c = prepared.crossing();
    let s = prepared.schedule();
    table.meta("omega_q_star", num(c.omega_q_star));
    table.meta("g_eff_numeric", num(c.g_eff_numeric));
    table.meta("hold_used", num(prepared.hold()));
    table.meta("t_i", num(s.t_i));
    table.meta("t_f", num(s.t_f()));
    table.meta("t_end", num(prepared.t_end()));
    table.meta("working_dimension", prepared.working_dimension());
}

fn echo_result(table: &mut Table, prefix: &str, r: &SimResult) {
    table.meta(&format!("{prefix}final_fidelity"), num(r.final_fidelity));
    table.meta(&format!("{prefix}phi_star"), num(r.phi_star));
    table.meta(&format!("{prefix}qubit_purity"), num(r.qubit_purity));
    table.meta(&format!("{prefix}bare_qubit_purity"), num(r.bare_qubit_purity));
    table.meta(&format!("{prefix}convergence_error"), num(r.convergence_error));
    table.meta(&format!("{prefix}max_trace_error"), num(r.integrity.trace_error));
    table.meta(&format!("{prefix}max_hermiticity_error"), num(r.integrity.hermiticity_error));
    table.meta(&format!("{prefix}min_eigenvalue"), num(r.integrity.min_eigenvalue));
}

/// Lowest `levels` eigenenergies over the qubit-frequency grid, in units of
/// `omega_a`.
pub fn cmd_spectrum(spec: &SpectrumSpec) -> Result<Table, CliError> {
    let space = build_space([spec.cutoff; 3], spec.excitation_cap)?;
    if spec.levels > space.dimension() {
        return Err(CliError::Config(format!(
            "levels = {} exceeds the space dimension {}",
            spec.levels,
            space.dimension()
        )));
    }
    let scan = scan_levels(&space, &spec.params, &spec.omega_q, spec.levels)?;
    let names: Vec<String> = (0..spec.levels).map(|k| format!("E_{k}")).collect();
    let mut header = vec!["omega_q"];
    header.extend(names.iter().map(String::as_str));
    let mut table = Table::new(&header);
    let p = &spec.params;
    table.meta("analysis", Analysis::Spectrum);
    table.meta("omega_a", num(p.omega_a));
    table.meta("omega_b", num(p.omega_b));
    table.meta("omega_c", num(p.omega_c));
    table.meta("theta", num(p.theta));
    table.meta("couplings", format!("[{}, {}, {}]", num(p.g_a), num(p.g_b), num(p.g_c)));
    table.meta("cutoff", spec.cutoff);
    table.meta(
        "excitation_cap",
        spec.excitation_cap.map_or("none".to_string(), |c| c.to_string()),
    );
    table.meta("omega_q_min", num(spec.omega_q[0]));
    table.meta("omega_q_max", num(*spec.omega_q.last().unwrap()));
    table.meta("omega_q_points", spec.omega_q.len());
    table.meta("levels", spec.levels);
    for point in scan {
        let mut row = vec![num(point.omega_q / p.omega_a)];
        row.extend(point.energies.iter().map(|e| num(e / p.omega_a)));
        table.row(row);
    }
    Ok(table)
}

/// Numerical (half minimum splitting) against closed-form effective
/// coupling, both as magnitudes. A failed crossing search flags its row and
/// leaves the numbers as NaN.
pub fn cmd_geff(cfg: &ProtocolConfig, g_values: &[f64]) -> Result<Table, CliError> {
    let target = cfg.target;
    let space = build_space(cfg.cutoffs(), cfg.excitation_cap)?;
    let pair = [BasisState::new(0, 0, 0, Qubit::Excited), target.photon_state()];
    let rows: Vec<Vec<String>> = g_values
        .par_iter()
        .map(|&g| {
            let run = ProtocolConfig {
                coupling: g,
                ..cfg.clone()
            };
            let params = run.system_params(cfg.params.omega_q);
            let analytic = target.g_eff_closed(&params).abs();
            let g_norm = num(g / params.omega_a);
            match find_avoided_crossing(
                &space,
                &params,
                target.resonance(&params),
                cfg.search_half_window,
                pair,
            ) {
                Ok(c) => {
                    let numeric = c.g_eff_numeric / params.omega_a;
                    let analytic = analytic / params.omega_a;
                    vec![
                        g_norm,
                        num(numeric),
                        num(analytic),
                        num((numeric - analytic).abs() / analytic),
                        "ok".to_string(),
                    ]
                }
                Err(e) => {
                    log::warn!("g = {g}: {e}");
                    vec![
                        g_norm,
                        "NaN".to_string(),
                        num(analytic / params.omega_a),
                        "NaN".to_string(),
                        format!("failed: {e}"),
                    ]
                }
            }
        })
        .collect();
    let mut table = Table::new(&[
        "g_over_omega_a",
        "geff_numeric",
        "geff_analytic",
        "rel_deviation",
        "status",
    ]);
    table.meta("analysis", Analysis::Geff);
    echo_protocol(&mut table, cfg);
    table.meta(
        "g_values",
        format!("[{}]", g_values.iter().map(|&g| num(g)).collect::<Vec<_>>().join(", ")),
    );
    for row in rows {
        table.row(row);
    }
    Ok(table)
}

/// Dressed populations, qubit frequency and best target fidelity over time.
pub fn cmd_protocol(cfg: &ProtocolConfig) -> Result<Table, CliError> {
    let prepared = PreparedProtocol::new(cfg)?;
    let r = prepared.run(cfg.gamma, cfg.kappa_value())?;
    let mut table = Table::new(&[
        "t",
        "pop_a",
        "pop_b",
        "pop_c",
        "pop_qubit",
        "omega_q_of_t",
        "fidelity",
    ]);
    table.meta("analysis", Analysis::Protocol);
    echo_protocol(&mut table, cfg);
    echo_schedule(&mut table, &prepared);
    echo_result(&mut table, "", &r);
    for k in 0..r.times.len() {
        table.row(vec![
            num(r.times[k]),
            num(r.pop_a[k]),
            num(r.pop_b[k]),
            num(r.pop_c[k]),
            num(r.pop_qubit[k]),
            num(r.omega_q[k]),
            num(r.fidelity[k]),
        ]);
    }
    Ok(table)
}

/// Fidelity time series per decay rate, long format. Mode rates are `gamma / 2`.
pub fn cmd_sweep(cfg: &ProtocolConfig, gammas: &[f64]) -> Result<Table, CliError> {
    let prepared = PreparedProtocol::new(cfg)?;
    let results = prepared.sweep(gammas)?;
    let mut table = Table::new(&["gamma", "t", "fidelity"]);
    table.meta("analysis", Analysis::Sweep);
    echo_protocol(&mut table, cfg);
    table.meta(
        "gammas",
        format!("[{}]", gammas.iter().map(|&g| num(g)).collect::<Vec<_>>().join(", ")),
    );
    echo_schedule(&mut table, &prepared);
    for r in &results {
        echo_result(&mut table, &format!("gamma_{}.", num(r.gamma)), r);
    }
    for r in &results {
        for (t, f) in r.times.iter().zip(&r.fidelity) {
            table.row(vec![num(r.gamma), num(*t), num(*f)]);
        }
    }
    Ok(table)
}

pub fn run(resolved: &Resolved) -> Result<Table, CliError> {
    match resolved {
        Resolved::Spectrum(spec) => cmd_spectrum(spec),
        Resolved::Geff { protocol, g_values } => cmd_geff(protocol, g_values),
        Resolved::Protocol(cfg) => cmd_protocol(cfg),
        Resolved::Sweep { protocol, gammas } => cmd_sweep(protocol, gammas),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_renders_metadata_then_header() {
        let mut t = Table::new(&["a", "b"]);
        t.meta("k", 1);
        t.row(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.render(), "# k = 1\na,b\n1,\"x,y\"\n");
    }

    #[test]
    fn numbers_are_fixed_precision() {
        assert_eq!(num(0.5), "5.000000000000e-1");
        assert_eq!(num(-1.0 / 3.0), "-3.333333333333e-1");
        assert_eq!(num(0.0), "0.000000000000e0");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        let numerical: CliError = usc_entangle::Error::SearchFailure(String::new()).into();
        assert_eq!(numerical.exit_code(), 3);
        let invalid: CliError = usc_entangle::Error::InvalidArgument(String::new()).into();
        assert_eq!(invalid.exit_code(), 2);
        let io: CliError = std::io::Error::other("x").into();
        assert_eq!(io.exit_code(), 1);
    }
}
