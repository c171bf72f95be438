//! TOML run configuration: flat session parameters plus an optional
//! `[topology]` table for network runs, and the compact `--eve` spec
//! parser used by the command line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackLocation, EveStrategy};
use crate::error::{Error, Result};
use crate::network::Topology;
use crate::protocol::SessionParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub session: SessionParams,
    pub topology: Option<Topology>,
}

/// Config files use flat session keys at top level with an optional
/// `[topology]` table, so the two are split before deserializing.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let err = |e: &dyn std::fmt::Display| Error::Config(format!("config parse error: {e}"));
    let mut table: toml::Table = text.parse().map_err(|e| err(&e))?;
    let topology = match table.remove("topology") {
        Some(value) => Some(value.try_into::<Topology>().map_err(|e| err(&e))?),
        None => None,
    };
    let session: SessionParams = toml::Value::Table(table).try_into().map_err(|e| err(&e))?;
    Ok(RunConfig { session, topology })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parse the compact attack spec used on the command line:
/// `none`, `intercept:<forward|return|both>:<p>`, `tap:<reflectivity>`,
/// or `probe:<meanPhotons>`.
pub fn parse_eve_spec(spec: &str) -> Result<EveStrategy> {
    let err = |msg: String| Error::Config(format!("bad --eve spec {spec:?}: {msg}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str, name: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| err(format!("{name} must be a number, got {s:?}")))
    };
    let strategy = match parts.as_slice() {
        ["none"] => EveStrategy::None,
        ["intercept", loc, p] => {
            let location = match *loc {
                "forward" => AttackLocation::Forward,
                "return" => AttackLocation::Return,
                "both" => AttackLocation::Both,
                other => {
                    return Err(err(format!(
                        "location must be forward, return, or both, got {other:?}"
                    )))
                }
            };
            EveStrategy::InterceptResendFreq {
                location,
                probability: num(p, "probability")?,
            }
        }
        ["tap", r] => EveStrategy::PassiveTap {
            reflectivity: num(r, "reflectivity")?,
        },
        ["probe", mu] => EveStrategy::StrongProbe {
            mean_photons: num(mu, "meanPhotons")?,
        },
        _ => {
            return Err(err(
                "expected none | intercept:<forward|return|both>:<p> | tap:<r> | probe:<mu>".into(),
            ))
        }
    };
    strategy.validate().map_err(err)?;
    Ok(strategy)
}
