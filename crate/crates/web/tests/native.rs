use dhg_web::{burgers_snapshots, oracle_table, sample_field};

#[test]
fn oracle_table_layout() {
    let t = oracle_table(1.0, 1.0, "tcc", 5).unwrap();
    assert_eq!(t.len(), 20);
    assert_eq!(t[0], 0.25);
    assert!((t[5] - 0.5).abs() < 1e-12);
    assert!(t[10..15].iter().all(|q| *q == 0.0));
    assert!(t[15..].iter().all(|r| *r > 0.0));
    assert!(oracle_table(1.0, 1.0, "pink", 5).is_err());
    assert!(oracle_table(1.0, 1.0, "tcc", 0).is_err());
}

#[test]
fn fields_are_seeded_and_pinned() {
    let a = sample_field("tcc", 50, 3, 65).unwrap();
    assert_eq!(a, sample_field("tcc", 50, 3, 65).unwrap());
    assert_ne!(a, sample_field("tcc", 50, 4, 65).unwrap());
    assert!(a[0].abs() < 1e-12 && a[64].abs() < 1e-12);
    assert!(sample_field("cauchy", 50, 3, 65).is_err());
}

#[test]
fn burgers_snapshots_decay_without_noise() {
    let out = burgers_snapshots(1.0, "none", 0, 101, 20_000, 5).unwrap();
    assert_eq!(out.len(), 5 * 101 + 1);
    let peak = |k: usize| out[k * 101..(k + 1) * 101].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((peak(0) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-3);
    for k in 1..5 {
        assert!(peak(k) < peak(k - 1));
    }
    let cost = out[5 * 101];
    assert!(cost > 0.2 && cost < 0.4, "{cost}");
}
