use std::f64::consts::{PI, SQRT_2};

use proptest::prelude::*;

use mug2::constants::{coefficient_c, load_constants, ConstantsTable};
use mug2::Error;

#[test]
fn coefficient_from_defaults() {
    let t = ConstantsTable::default();
    let m = 0.1056583755f64;
    let want = 3.0 * m * m * 1.1663788e-5 / (4.0 * SQRT_2 * PI * PI);
    assert!((coefficient_c(&t) / want - 1.0).abs() < 1e-14);
    assert!((coefficient_c(&t) / 7.0e-9 - 1.0).abs() < 0.01);
}

#[test]
fn coefficient_scales_with_mass_squared_and_fermi_constant() {
    let t = ConstantsTable::default();
    let c = coefficient_c(&t);
    let doubled_m = t.with_value("m_mu", 2.0 * t.m_mu()).unwrap();
    assert!((coefficient_c(&doubled_m) / (4.0 * c) - 1.0).abs() < 1e-14);
    let halved_g = t.with_value("G_F", 0.5 * t.g_f()).unwrap();
    assert!((coefficient_c(&halved_g) / (0.5 * c) - 1.0).abs() < 1e-14);
}

#[test]
fn dump_parses_back_to_the_same_table() {
    let t = ConstantsTable::default();
    let back = ConstantsTable::parse_overrides(&t.dump(), "dump").unwrap();
    assert_eq!(back, t);
    assert_eq!(back.dump(), t.dump());
}

#[test]
fn overrides_and_provenance() {
    let text = "# comment\n\nG_F = 1.1663787e-5  # local value\nm_mu = 0.10566\n";
    let t = ConstantsTable::parse_overrides(text, "local.cfg").unwrap();
    assert_eq!(t.g_f(), 1.1663787e-5);
    assert_eq!(t.provenance("G_F"), Some("local value"));
    assert_eq!(t.provenance("m_mu"), Some("local.cfg:4"));
    assert!(t.provenance("alpha").unwrap().contains("CODATA"));
    assert_eq!(t.m_e(), ConstantsTable::default().m_e());
}

#[test]
fn references_may_be_absent() {
    let t = ConstantsTable::parse_overrides("a_mu_sm_lattice = none\n", "x").unwrap();
    assert!(t.a_mu_sm_lattice().is_none());
    assert!(t.a_mu_exp().is_some());
    assert!(t.dump().contains("a_mu_sm_lattice = none"));
    assert!(ConstantsTable::parse_overrides("m_mu = none\n", "x").is_err());
}

#[test]
fn parse_errors_name_key_and_line() {
    let err = ConstantsTable::parse_overrides("m_mu = 0.1\nG_F = fast\n", "x").unwrap_err();
    match err {
        Error::Parse { key, line, .. } => assert_eq!((key.as_str(), line), ("G_F", 2)),
        other => panic!("{other}"),
    }
    let err = ConstantsTable::parse_overrides("\nm_tau = 1.7\n", "x").unwrap_err();
    assert!(matches!(err, Error::UnknownKey { ref key, line: 2 } if key == "m_tau"));
    assert!(ConstantsTable::parse_overrides("just text\n", "x").is_err());
    assert!(ConstantsTable::parse_overrides("m_mu = inf\n", "x").is_err());
}

#[test]
fn invalid_values_are_rejected() {
    assert!(matches!(ConstantsTable::parse_overrides("m_mu = -0.1\n", "x"), Err(Error::Invalid(_))));
    assert!(matches!(ConstantsTable::parse_overrides("a_mu_ref = 0.01\n", "x"), Err(Error::Invalid(_))));
    assert!(ConstantsTable::parse_overrides("B_tesla = 0\n", "x").is_ok());
}

#[test]
fn file_loading() {
    assert_eq!(load_constants(None).unwrap(), ConstantsTable::default());
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    assert!(matches!(load_constants(Some(&missing)), Err(Error::NotFound(_))));
    let path = dir.path().join("c.cfg");
    std::fs::write(&path, "tau_mu = 2.2e-6\n").unwrap();
    let t = load_constants(Some(&path)).unwrap();
    assert_eq!(t.tau_mu(), 2.2e-6);
    assert!((t.tau_lab() / (t.gamma_magic() * 2.2e-6) - 1.0).abs() < 1e-15);
}

#[test]
fn unit_conversions() {
    let t = ConstantsTable::default();
    let s = 1.7e-6;
    assert!((t.natural_to_seconds(t.seconds_to_natural(s)) / s - 1.0).abs() < 1e-15);
    let e = (4.0 * PI * t.alpha()).sqrt();
    assert!((t.elementary_charge() / e - 1.0).abs() < 1e-15);
    assert!((t.bohr_magneton() / (e / (2.0 * t.m_e())) - 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn dump_is_idempotent_under_overrides(
        m_mu in 0.05f64..0.2,
        g_f in 1e-6f64..1e-4,
        b in 0.0f64..10.0,
        a_ref in 1.0e-3f64..1.3e-3,
    ) {
        let t = ConstantsTable::default()
            .with_value("m_mu", m_mu).unwrap()
            .with_value("G_F", g_f).unwrap()
            .with_value("B_tesla", b).unwrap()
            .with_value("a_mu_ref", a_ref).unwrap();
        let once = ConstantsTable::parse_overrides(&t.dump(), "p").unwrap();
        prop_assert_eq!(&once, &t);
        let twice = ConstantsTable::parse_overrides(&once.dump(), "p").unwrap();
        prop_assert_eq!(once.dump(), twice.dump());
    }
}
