use usc_entangle::protocol::{
    decoherence_sweep, ChannelPolicy, PreparedProtocol, ProtocolConfig, SimResult, Target,
};

fn bookkeeping_drift(result: &SimResult, prepared: &PreparedProtocol) -> f64 {
    let start = prepared.config().t_on;
    let stop = prepared.schedule().t_i;
    let sums: Vec<f64> = result
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= start && t <= stop)
        .map(|(k, _)| result.pop_qubit[k] + 0.5 * (result.pop_a[k] + result.pop_b[k]))
        .collect();
    assert!(sums.len() > 10);
    let hi = sums.iter().cloned().fold(f64::MIN, f64::max);
    let lo = sums.iter().cloned().fold(f64::MAX, f64::min);
    hi - lo
}

#[test]
fn lossless_bell_reaches_target_and_disentangles() {
    let prepared = PreparedProtocol::new(&ProtocolConfig::new(Target::B110)).unwrap();
    let result = prepared.run(0.0, 0.0).unwrap();
    assert!(result.final_fidelity >= 0.99, "F = {}", result.final_fidelity);
    assert!(result.qubit_purity >= 0.99, "purity = {}", result.qubit_purity);
    assert!(result.integrity.violation().is_none());
    assert!(result.fidelity.iter().all(|f| (0.0..=1.0 + 1e-12).contains(f)));
    for series in [&result.pop_a, &result.pop_b, &result.pop_c, &result.pop_qubit] {
        assert!(series.iter().all(|&p| p >= -1e-8));
    }
    // qubit starts half excited, the spectator mode stays dark
    let start = result.times.iter().position(|&t| t >= 5.0).unwrap();
    assert!((result.pop_qubit[start] - 0.5).abs() < 0.02);
    assert!(result.pop_a[start] < 0.01 && result.pop_b[start] < 0.01);
    assert!(result.pop_c.iter().all(|&p| p < 1e-3));
    let last = result.times.len() - 1;
    assert!(result.pop_qubit[last] < 0.05);
    assert!((result.pop_a[last] - 0.5).abs() < 0.03);
    assert!((result.pop_b[last] - 0.5).abs() < 0.03);
}

#[test]
fn excitation_bookkeeping_during_hold() {
    // dressed occupations of dressed eigenstates deviate from integers at order g^2
    let nominal = PreparedProtocol::new(&ProtocolConfig::new(Target::B110)).unwrap();
    let drift = bookkeeping_drift(&nominal.run(0.0, 0.0).unwrap(), &nominal);
    assert!(drift < 0.025, "drift {drift}");

    let mut weak = ProtocolConfig::new(Target::B110);
    weak.coupling = 0.02;
    weak.sample_dt = 10.0;
    let weak = PreparedProtocol::new(&weak).unwrap();
    let drift = bookkeeping_drift(&weak.run(0.0, 0.0).unwrap(), &weak);
    assert!(drift < 1e-3, "drift {drift}");
}

#[test]
fn hold_time_is_locally_optimal() {
    let base = ProtocolConfig::new(Target::B101);
    let hold = PreparedProtocol::new(&base).unwrap().hold();
    let fidelities: Vec<f64> = [0.8, 0.9, 1.0, 1.1, 1.2]
        .iter()
        .map(|scale| {
            let mut cfg = base.clone();
            cfg.hold = Some(scale * hold);
            PreparedProtocol::new(&cfg).unwrap().run(0.0, 0.0).unwrap().final_fidelity
        })
        .collect();
    let best = fidelities
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!((1..=3).contains(&best), "{fidelities:?}");
    assert!(fidelities[0] < fidelities[best] && fidelities[4] < fidelities[best]);
}

#[test]
fn bell_sweep_is_monotone_in_gamma() {
    let gammas = [0.0, 1e-5, 1e-4, 1e-3, 1e-2];
    let results = decoherence_sweep(&ProtocolConfig::new(Target::B011), &gammas).unwrap();
    let finals: Vec<f64> = results.iter().map(|r| r.final_fidelity).collect();
    for pair in finals.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-9, "{finals:?}");
    }
    assert!(finals[..4].iter().all(|&f| f >= 0.9), "{finals:?}");
    assert!(finals[3] - finals[4] > 0.05, "{finals:?}");
    for (r, &g) in results.iter().zip(&gammas) {
        assert_eq!(r.gamma, g);
        assert_eq!(r.kappa, g / 2.0);
    }
}

#[test]
fn channel_policies_agree_on_plateaus() {
    let mut cfg = ProtocolConfig::new(Target::B110).with_gamma(1e-3);
    let plateau = PreparedProtocol::new(&cfg).unwrap().run(1e-3, 5e-4).unwrap();
    cfg.channel_policy = ChannelPolicy::Instantaneous;
    let instant = PreparedProtocol::new(&cfg).unwrap().run(1e-3, 5e-4).unwrap();
    assert!((plateau.final_fidelity - instant.final_fidelity).abs() < 2e-3);
    assert!(plateau.final_fidelity >= 0.9);
}
