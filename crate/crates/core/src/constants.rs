//! Physical constants and experimental reference values.
//!
//! Everything is kept in natural units (GeV, ħ = c = 1, Heaviside-Lorentz
//! charge `e = sqrt(4πα)`); SI quantities only appear at the edges through
//! [`ConstantsTable::seconds_to_natural`] and friends.
//!
//! The on-disk format is flat `key = value  # provenance` text. Full-line
//! `#` comments are ignored, a trailing comment on a value line becomes the
//! provenance of that entry. Reference anomalies may be set to `none` to
//! drop them.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Positive,
    /// Muon-anomaly sized number, checked against a sanity band.
    Anomaly,
    /// Reference value that may be absent (`none`).
    Reference,
    NonNegative,
}

struct KeySpec {
    key: &'static str,
    kind: Kind,
    default: Option<f64>,
    provenance: &'static str,
}

const KEYS: &[KeySpec] = &[
    KeySpec { key: "m_mu", kind: Kind::Positive, default: Some(0.1056583755), provenance: "muon mass [GeV], PDG 2024" },
    KeySpec { key: "m_e", kind: Kind::Positive, default: Some(0.51099895069e-3), provenance: "electron mass [GeV], CODATA 2022" },
    KeySpec { key: "G_F", kind: Kind::Positive, default: Some(1.1663788e-5), provenance: "Fermi constant [GeV^-2], PDG 2024" },
    KeySpec { key: "alpha", kind: Kind::Positive, default: Some(7.2973525643e-3), provenance: "fine-structure constant, CODATA 2022" },
    KeySpec { key: "hbar_over_GeV_s", kind: Kind::Positive, default: Some(6.582119569e-25), provenance: "reduced Planck constant [GeV s], CODATA (exact)" },
    KeySpec { key: "c_m_per_s", kind: Kind::Positive, default: Some(299792458.0), provenance: "speed of light [m/s], SI (exact)" },
    KeySpec { key: "tau_mu", kind: Kind::Positive, default: Some(2.1969811e-6), provenance: "muon proper lifetime [s], PDG 2024" },
    KeySpec { key: "E_max", kind: Kind::Positive, default: Some(3.1), provenance: "positron lab endpoint energy [GeV], upper edge of the observed range" },
    KeySpec { key: "gamma_magic", kind: Kind::Positive, default: Some(29.3), provenance: "magic Lorentz factor of the g-2 storage rings" },
    KeySpec { key: "B_tesla", kind: Kind::NonNegative, default: Some(1.45), provenance: "storage-ring dipole field [T], BNL/FNAL" },
    KeySpec { key: "a_mu_ref", kind: Kind::Anomaly, default: Some(116592059e-11), provenance: "ppm denominator: experimental world average, Muon g-2 PRL 131, 161802 (2023)" },
    KeySpec { key: "a_mu_exp", kind: Kind::Reference, default: Some(116592059e-11), provenance: "experimental world average, Muon g-2 PRL 131, 161802 (2023)" },
    KeySpec { key: "a_mu_exp_err", kind: Kind::NonNegative, default: Some(22e-11), provenance: "1 sigma of a_mu_exp" },
    KeySpec { key: "a_mu_sm_datadriven", kind: Kind::Reference, default: Some(116591810e-11), provenance: "SM, data-driven HVP, Aoyama et al. Phys. Rep. 887 (2020)" },
    KeySpec { key: "a_mu_sm_datadriven_err", kind: Kind::NonNegative, default: Some(43e-11), provenance: "1 sigma of a_mu_sm_datadriven" },
    KeySpec { key: "a_mu_sm_lattice", kind: Kind::Reference, default: Some(116591954e-11), provenance: "SM with lattice LO-HVP, Borsanyi et al. Nature 593 (2021)" },
    KeySpec { key: "a_mu_sm_lattice_err", kind: Kind::NonNegative, default: Some(57e-11), provenance: "1 sigma of a_mu_sm_lattice" },
];

const ANOMALY_BAND: (f64, f64) = (1.0e-3, 1.3e-3);

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: Option<f64>,
    provenance: String,
}

/// A reference value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsTable {
    entries: BTreeMap<&'static str, Entry>,
}

impl Default for ConstantsTable {
    fn default() -> Self {
        let entries = KEYS
            .iter()
            .map(|k| {
                (
                    k.key,
                    Entry {
                        value: k.default,
                        provenance: k.provenance.to_string(),
                    },
                )
            })
            .collect();
        ConstantsTable { entries }
    }
}

/// Loads the table, overriding defaults with the entries of `path` if given.
pub fn load_constants(path: Option<&Path>) -> Result<ConstantsTable> {
    match path {
        None => Ok(ConstantsTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(p.to_path_buf()),
                _ => Error::Io(e),
            })?;
            ConstantsTable::parse_overrides(&text, &p.display().to_string())
        }
    }
}

/// Dimensionless coefficient `3 m_mu^2 G_F / (4 sqrt(2) pi^2)` multiplying the
/// neutrino energy fraction in the anomaly correction.
pub fn coefficient_c(table: &ConstantsTable) -> f64 {
    let m = table.m_mu();
    3.0 * m * m * table.g_f() / (4.0 * SQRT_2 * PI * PI)
}

impl ConstantsTable {
    /// Applies `key = value` overrides from `text` on top of the defaults.
    pub fn parse_overrides(text: &str, origin: &str) -> Result<Self> {
        let mut table = ConstantsTable::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, rest) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                key: trimmed.to_string(),
                line,
                reason: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let (value_str, provenance) = match rest.split_once('#') {
                Some((v, p)) => (v.trim(), p.trim().to_string()),
                None => (rest.trim(), String::new()),
            };
            let spec = KEYS
                .iter()
                .find(|k| k.key == key)
                .ok_or_else(|| Error::UnknownKey {
                    key: key.to_string(),
                    line,
                })?;
            let value = if value_str.eq_ignore_ascii_case("none") {
                if spec.kind != Kind::Reference {
                    return Err(Error::Parse {
                        key: key.into(),
                        line,
                        reason: "only reference anomalies may be `none`".into(),
                    });
                }
                None
            } else {
                let v: f64 = value_str.parse().map_err(|_| Error::Parse {
                    key: key.into(),
                    line,
                    reason: format!("`{value_str}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        key: key.into(),
                        line,
                        reason: "value must be finite".into(),
                    });
                }
                Some(v)
            };
            let provenance = if provenance.is_empty() {
                format!("{origin}:{line}")
            } else {
                provenance
            };
            table.entries.insert(spec.key, Entry { value, provenance });
        }
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for spec in KEYS {
            let entry = &self.entries[spec.key];
            if entry.provenance.trim().is_empty() {
                return Err(Error::Invalid(format!("{} has no provenance", spec.key)));
            }
            let Some(v) = entry.value else {
                continue;
            };
            match spec.kind {
                Kind::Positive if v <= 0.0 => {
                    return Err(Error::Invalid(format!("{} must be positive", spec.key)))
                }
                Kind::NonNegative if v < 0.0 => {
                    return Err(Error::Invalid(format!("{} must be non-negative", spec.key)))
                }
                Kind::Anomaly if !(ANOMALY_BAND.0..=ANOMALY_BAND.1).contains(&v) => {
                    return Err(Error::Invalid(format!(
                        "{} = {v} outside the sanity band [{:e}, {:e}]",
                        spec.key, ANOMALY_BAND.0, ANOMALY_BAND.1
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Canonical text form, sorted by key. Parsing it back gives an equal table.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (key, entry) in &self.entries {
            let value = entry.value.map_or_else(|| "none".to_string(), format_exact);
            let _ = writeln!(out, "{key} = {value}  # {}", entry.provenance);
        }
        out
    }

    pub fn provenance(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.provenance.as_str())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).and_then(|e| e.value)
    }

    /// Returns a copy with `key` replaced; the result is validated.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        let spec = KEYS
            .iter()
            .find(|k| k.key == key)
            .ok_or_else(|| Error::UnknownKey {
                key: key.to_string(),
                line: 0,
            })?;
        let mut out = self.clone();
        out.entries.insert(
            spec.key,
            Entry {
                value: Some(value),
                provenance: "programmatic override".into(),
            },
        );
        out.validate()?;
        Ok(out)
    }

    fn required(&self, key: &str) -> f64 {
        self.entries[key]
            .value
            .expect("required constants are never `none`")
    }

    fn reference(&self, key: &str) -> Option<Measured> {
        let value = self.entries[key].value?;
        let err = self.get(&format!("{key}_err")).unwrap_or(0.0);
        Some(Measured { value, err })
    }

    pub fn m_mu(&self) -> f64 {
        self.required("m_mu")
    }
    pub fn m_e(&self) -> f64 {
        self.required("m_e")
    }
    pub fn g_f(&self) -> f64 {
        self.required("G_F")
    }
    pub fn alpha(&self) -> f64 {
        self.required("alpha")
    }
    pub fn hbar_gev_s(&self) -> f64 {
        self.required("hbar_over_GeV_s")
    }
    pub fn c_m_per_s(&self) -> f64 {
        self.required("c_m_per_s")
    }
    pub fn tau_mu(&self) -> f64 {
        self.required("tau_mu")
    }
    pub fn e_max(&self) -> f64 {
        self.required("E_max")
    }
    pub fn gamma_magic(&self) -> f64 {
        self.required("gamma_magic")
    }
    pub fn b_tesla(&self) -> f64 {
        self.required("B_tesla")
    }
    pub fn a_mu_ref(&self) -> f64 {
        self.required("a_mu_ref")
    }
    pub fn a_mu_exp(&self) -> Option<Measured> {
        self.reference("a_mu_exp")
    }
    pub fn a_mu_sm_datadriven(&self) -> Option<Measured> {
        self.reference("a_mu_sm_datadriven")
    }
    pub fn a_mu_sm_lattice(&self) -> Option<Measured> {
        self.reference("a_mu_sm_lattice")
    }

    /// Dilated lifetime `gamma_magic * tau_mu` in seconds.
    pub fn tau_lab(&self) -> f64 {
        self.gamma_magic() * self.tau_mu()
    }

    /// Heaviside-Lorentz elementary charge.
    pub fn elementary_charge(&self) -> f64 {
        (4.0 * PI * self.alpha()).sqrt()
    }

    /// `e / (2 m_e)` in GeV^-1.
    pub fn bohr_magneton(&self) -> f64 {
        self.elementary_charge() / (2.0 * self.m_e())
    }

    pub fn seconds_to_natural(&self, t: f64) -> f64 {
        t / self.hbar_gev_s()
    }

    pub fn natural_to_seconds(&self, t: f64) -> f64 {
        t * self.hbar_gev_s()
    }

    /// Product `eB` in GeV^2 for a field given in tesla.
    pub fn charge_times_field(&self, b_tesla: f64) -> f64 {
        let c = self.c_m_per_s();
        b_tesla * c * c * self.hbar_gev_s() * 1e-9
    }

    /// Field in natural units (GeV^2) for a field given in tesla.
    pub fn tesla_to_natural(&self, b_tesla: f64) -> f64 {
        self.charge_times_field(b_tesla) / self.elementary_charge()
    }
}

/// Shortest representation that parses back to the identical `f64`.
fn format_exact(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e9).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
