//! TOML configuration file.
//!
//! ```toml
//! [source]
//! v1 = 200.0
//! v3 = 220.0
//!
//! [load]
//! v2 = 180.0
//! v4 = 250.0
//!
//! [modulation]          # optional, all zero when absent
//! delta1 = 0.0
//! delta2 = 0.456
//! delta3 = 0.0063
//! delta4 = 0.438
//!
//! [transformer]         # primary-referred, H and ohm
//! l11 = 238e-6
//! l12 = 38e-6
//! # ... l21, l22, l31, l32, l41, l42
//! lm1 = 1e-3            # lm1..lm4 optional, 1 mH each by default
//! r11 = 0.4
//! # ... r12 .. r42
//! n1 = 2.0
//! # ... n2 .. n4
//!
//! [switching]
//! fs = 25e3
//! ```
//!
//! Unknown keys and sections are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{validate_config, QabConfig, QabParameters, DEFAULT_MAGNETIZING_INDUCTANCE};
use crate::error::{QabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub source: SourceSection,
    pub load: LoadSection,
    #[serde(default)]
    pub modulation: ModulationSection,
    pub transformer: TransformerSection,
    pub switching: SwitchingSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub v1: f64,
    pub v3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    pub v2: f64,
    pub v4: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub delta2: f64,
    #[serde(default)]
    pub delta3: f64,
    #[serde(default)]
    pub delta4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSection {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
    pub l31: f64,
    pub l32: f64,
    pub l41: f64,
    pub l42: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm4: Option<f64>,
    pub r11: f64,
    pub r12: f64,
    pub r21: f64,
    pub r22: f64,
    pub r31: f64,
    pub r32: f64,
    pub r41: f64,
    pub r42: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    pub fs: f64,
}

impl ConfigFile {
    pub fn parameters(&self) -> QabParameters {
        let t = &self.transformer;
        let lm = [t.lm1, t.lm2, t.lm3, t.lm4];
        QabParameters {
            v_dc: [self.source.v1, self.load.v2, self.source.v3, self.load.v4],
            delta: [
                self.modulation.delta1,
                self.modulation.delta2,
                self.modulation.delta3,
                self.modulation.delta4,
            ],
            l_leak: [
                [t.l11, t.l12],
                [t.l21, t.l22],
                [t.l31, t.l32],
                [t.l41, t.l42],
            ],
            l_mag: Some(lm.map(|l| l.unwrap_or(DEFAULT_MAGNETIZING_INDUCTANCE))),
            r_wind: [
                [t.r11, t.r12],
                [t.r21, t.r22],
                [t.r31, t.r32],
                [t.r41, t.r42],
            ],
            turns: [t.n1, t.n2, t.n3, t.n4],
            f_sw: self.switching.fs,
        }
    }

    pub fn from_config(cfg: &QabConfig) -> Self {
        let (l, r, n, lm) = (&cfg.l_leak, &cfg.r_wind, &cfg.turns, &cfg.l_mag);
        ConfigFile {
            source: SourceSection {
                v1: cfg.v_dc[0],
                v3: cfg.v_dc[2],
            },
            load: LoadSection {
                v2: cfg.v_dc[1],
                v4: cfg.v_dc[3],
            },
            modulation: ModulationSection {
                delta1: cfg.delta[0],
                delta2: cfg.delta[1],
                delta3: cfg.delta[2],
                delta4: cfg.delta[3],
            },
            transformer: TransformerSection {
                l11: l[0][0],
                l12: l[0][1],
                l21: l[1][0],
                l22: l[1][1],
                l31: l[2][0],
                l32: l[2][1],
                l41: l[3][0],
                l42: l[3][1],
                lm1: Some(lm[0]),
                lm2: Some(lm[1]),
                lm3: Some(lm[2]),
                lm4: Some(lm[3]),
                r11: r[0][0],
                r12: r[0][1],
                r21: r[1][0],
                r22: r[1][1],
                r31: r[2][0],
                r32: r[2][1],
                r41: r[3][0],
                r42: r[3][1],
                n1: n[0],
                n2: n[1],
                n3: n[2],
                n4: n[3],
            },
            switching: SwitchingSection { fs: cfg.f_sw },
        }
    }
}

pub fn parse_config(text: &str) -> Result<QabConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| QabError::ConfigFile(e.to_string()))?;
    Ok(validate_config(file.parameters())?)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<QabConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| QabError::File {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        QabError::ConfigFile(msg) => QabError::ConfigFile(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn to_toml(cfg: &QabConfig) -> String {
    toml::to_string(&ConfigFile::from_config(cfg)).expect("config sections serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Violation;

    const TABLE_ONE: &str = r#"
[source]
v1 = 200.0
v3 = 220.0

[load]
v2 = 180.0
v4 = 250.0

[modulation]
delta1 = 0.0
delta2 = 0.4560
delta3 = 0.0063
delta4 = 0.4380

[transformer]
l11 = 238e-6
l12 = 38e-6
l21 = 38e-6
l22 = 238e-6
l31 = 238e-6
l32 = 38e-6
l41 = 38e-6
l42 = 238e-6
r11 = 0.4
r12 = 0.2
r21 = 0.2
r22 = 0.4
r31 = 0.4
r32 = 0.2
r41 = 0.2
r42 = 0.4
n1 = 2.0
n2 = 2.0
n3 = 2.0
n4 = 2.0

[switching]
fs = 25e3
"#;

    #[test]
    fn table_one_text() {
        assert_eq!(parse_config(TABLE_ONE).unwrap(), QabConfig::table_one());
    }

    #[test]
    fn round_trip() {
        let cfg = QabConfig::low_power_experiment();
        assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn partial_magnetizing_override() {
        let text = TABLE_ONE.replace("r11 = 0.4", "lm3 = 3e-3\nr11 = 0.4");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.l_mag, [1e-3, 1e-3, 3e-3, 1e-3]);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = TABLE_ONE.replace("fs = 25e3", "fs = 25e3\nduty = 0.5");
        let err = parse_config(&text).unwrap_err();
        assert!(
            matches!(err, QabError::ConfigFile(ref m) if m.contains("duty")),
            "{err}"
        );
        let text = format!("{TABLE_ONE}\n[extra]\nx = 1\n");
        assert!(matches!(parse_config(&text), Err(QabError::ConfigFile(_))));
    }

    #[test]
    fn missing_key_rejected() {
        let text = TABLE_ONE.replace("n3 = 2.0\n", "");
        assert!(matches!(parse_config(&text), Err(QabError::ConfigFile(m)) if m.contains("n3")));
    }

    #[test]
    fn modulation_optional() {
        let start = TABLE_ONE.find("[modulation]").unwrap();
        let end = TABLE_ONE.find("[transformer]").unwrap();
        let text = format!("{}{}", &TABLE_ONE[..start], &TABLE_ONE[end..]);
        assert_eq!(parse_config(&text).unwrap().delta, [0.0; 4]);
    }

    #[test]
    fn values_are_validated() {
        let text = TABLE_ONE.replace("delta2 = 0.4560", "delta2 = 1.5");
        match parse_config(&text) {
            Err(QabError::Config(e)) => {
                assert!(e.contains(|v| matches!(v, Violation::PhaseShiftOutOfRange { .. })))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_config("/nonexistent/qab.toml").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/qab.toml"));
    }
}
