//! Flat `section.key = value` configuration files.
//!
//! The syntax is TOML restricted to dotted keys, so comments start with `#`
//! and strings are quoted. Every key is optional; missing keys take the
//! reference-scenario defaults of [`SimConfig::default`]. Unknown keys are
//! rejected. [`serialize_config`] writes every key, and parsing its output
//! gives back the same configuration.
//!
//! | key | type | meaning |
//! |---|---|---|
//! | `channel.diffusion_coeff` | float | m^2/s |
//! | `channel.mean_vel`, `channel.std_vel` | [float; 3] | m/s, per axis |
//! | `channel.f_sim`, `channel.f_rx` | float | Hz |
//! | `channel.t_mem` | float | channel memory, s |
//! | `channel.emission_scale` | float | molecules per unit amplitude per s |
//! | `geometry.tx_pos` | [float; 3] | m |
//! | `geometry.rx_pos` | list of [float; 3] | first entry is the main receiver |
//! | `modulation.n_dim`, `modulation.m_levels` | int | N, M |
//! | `modulation.t_sym` | float | s |
//! | `frame.n_pilot`, `frame.n_data` | int | symbols per frame |
//! | `frame.pilot_seed` | int | fixes the pilot sequence |
//! | `link.snr_db` | float | `inf` disables noise |
//! | `link.combiners` | list of `"sc"`, `"egc"`, `"dgc"`, `"pgc"` | |
//! | `equalizer.mode` | `"affine-mmse"` or `"none"` | |
//! | `equalizer.stage` | `"post-combine"` or `"per-receiver"` | |
//! | `equalizer.ridge` | float or `"auto"` | |
//! | `combining.dgc_std` | float or `"auto"` | m |
//! | `frontend.sync_offset` | float or `"auto"` | s |
//! | `run.master_seed` | int (or decimal string above 2^63) | |
//! | `run.n_trials` | int | frames per error-rate point |

use std::collections::BTreeMap;
use std::fmt::Write as _;

use flowdiv_core::channel::Vec3;
use flowdiv_core::combining::CombinerKind;
use flowdiv_core::link::{EqualizerMode, EqualizerStage, SimConfig};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::{Result, SimError};

fn err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out)?,
            v => {
                if out.insert(key.clone(), v).is_some() {
                    return Err(err(format!("duplicate key {key}")));
                }
            }
        }
    }
    Ok(())
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn f64(&mut self, key: &str, into: &mut f64) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = as_f64(key, &v)?;
        }
        Ok(())
    }

    fn usize(&mut self, key: &str, into: &mut usize) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = match v {
                Value::Integer(i) if i >= 0 => i as usize,
                _ => return Err(err(format!("{key} must be a nonnegative integer"))),
            };
        }
        Ok(())
    }

    fn u64(&mut self, key: &str, into: &mut u64) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = match v {
                Value::Integer(i) if i >= 0 => i as u64,
                Value::String(s) => s
                    .parse()
                    .map_err(|_| err(format!("{key} must be a 64-bit unsigned integer")))?,
                _ => return Err(err(format!("{key} must be a 64-bit unsigned integer"))),
            };
        }
        Ok(())
    }

    fn vec3(&mut self, key: &str, into: &mut Vec3) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = as_vec3(key, &v)?;
        }
        Ok(())
    }

    fn auto_f64(&mut self, key: &str, into: &mut Option<f64>) -> Result<()> {
        match self.take(key) {
            None => {}
            Some(Value::String(s)) if s == "auto" => *into = None,
            Some(v) => *into = Some(as_f64(key, &v)?),
        }
        Ok(())
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(err(format!("{key} must be a string"))),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(err(format!("{key} must be a number"))),
    }
}

fn as_vec3(key: &str, v: &Value) -> Result<Vec3> {
    let arr = match v {
        Value::Array(a) if a.len() == 3 => a,
        _ => return Err(err(format!("{key} must be a list of three numbers"))),
    };
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = as_f64(key, x)?;
    }
    Ok(out)
}

pub fn parse_combiners(s: &str) -> Result<Vec<CombinerKind>> {
    s.split(',')
        .map(|t| t.trim().parse::<CombinerKind>().map_err(|e| err(e.to_string())))
        .collect()
}

/// Parses a configuration file on top of the reference defaults.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| err(e.to_string()))?;
    let mut flat = BTreeMap::new();
    flatten("", table, &mut flat)?;
    let mut k = Keys(flat);
    let mut c = SimConfig::default();

    let ch = &mut c.channel;
    k.f64("channel.diffusion_coeff", &mut ch.diffusion_coeff)?;
    k.vec3("channel.mean_vel", &mut ch.mean_vel)?;
    k.vec3("channel.std_vel", &mut ch.std_vel)?;
    k.f64("channel.f_sim", &mut ch.f_sim)?;
    k.f64("channel.f_rx", &mut ch.f_rx)?;
    k.f64("channel.t_mem", &mut ch.t_mem)?;
    k.f64("channel.emission_scale", &mut ch.emission_scale)?;

    k.vec3("geometry.tx_pos", &mut c.geometry.tx_pos)?;
    if let Some(v) = k.take("geometry.rx_pos") {
        let list = match &v {
            Value::Array(a) => a,
            _ => return Err(err("geometry.rx_pos must be a list of positions")),
        };
        c.geometry.rx_pos = list
            .iter()
            .map(|p| as_vec3("geometry.rx_pos", p))
            .collect::<Result<_>>()?;
    }

    k.usize("modulation.n_dim", &mut c.scheme.n_dim)?;
    k.usize("modulation.m_levels", &mut c.scheme.m_levels)?;
    k.f64("modulation.t_sym", &mut c.scheme.t_sym)?;

    k.usize("frame.n_pilot", &mut c.n_pilot)?;
    k.usize("frame.n_data", &mut c.n_data)?;
    k.u64("frame.pilot_seed", &mut c.pilot_seed)?;

    k.f64("link.snr_db", &mut c.snr_db)?;
    match k.take("link.combiners") {
        None => {}
        Some(Value::Array(a)) => {
            c.combiners = a
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.parse::<CombinerKind>().map_err(|e| err(e.to_string())),
                    _ => Err(err("link.combiners must be a list of strings")),
                })
                .collect::<Result<_>>()?;
        }
        Some(Value::String(s)) => c.combiners = parse_combiners(&s)?,
        Some(_) => return Err(err("link.combiners must be a list of strings")),
    }

    if let Some(s) = k.string("equalizer.mode")? {
        c.equalizer = match s.as_str() {
            "affine-mmse" => EqualizerMode::AffineMmse,
            "none" => EqualizerMode::None,
            _ => return Err(err(format!("unknown equalizer.mode {s:?}"))),
        };
    }
    if let Some(s) = k.string("equalizer.stage")? {
        c.equalizer_stage = match s.as_str() {
            "post-combine" => EqualizerStage::PostCombine,
            "per-receiver" => EqualizerStage::PerReceiver,
            _ => return Err(err(format!("unknown equalizer.stage {s:?}"))),
        };
    }
    k.auto_f64("equalizer.ridge", &mut c.ridge)?;
    k.auto_f64("combining.dgc_std", &mut c.dgc_std)?;
    k.auto_f64("frontend.sync_offset", &mut c.sync_offset)?;

    k.u64("run.master_seed", &mut c.master_seed)?;
    k.usize("run.n_trials", &mut c.n_trials)?;

    if let Some(key) = k.0.keys().next() {
        return Err(err(format!("unknown key {key}")));
    }
    c.validate()?;
    Ok(c)
}

// `{:?}` prints the shortest representation that reads back to the same
// f64, and its `inf` / exponent forms are valid TOML floats.
fn float(x: f64) -> String {
    format!("{x:?}")
}

fn vec3(v: &Vec3) -> String {
    format!("[{}, {}, {}]", float(v[0]), float(v[1]), float(v[2]))
}

fn auto(x: Option<f64>) -> String {
    x.map_or_else(|| "\"auto\"".to_string(), float)
}

fn seed(x: u64) -> String {
    if x <= i64::MAX as u64 {
        x.to_string()
    } else {
        format!("\"{x}\"")
    }
}

/// Writes every key; `parse_config(&serialize_config(c)) == c`.
pub fn serialize_config(c: &SimConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    let ch = &c.channel;
    kv("channel.diffusion_coeff", float(ch.diffusion_coeff));
    kv("channel.mean_vel", vec3(&ch.mean_vel));
    kv("channel.std_vel", vec3(&ch.std_vel));
    kv("channel.f_sim", float(ch.f_sim));
    kv("channel.f_rx", float(ch.f_rx));
    kv("channel.t_mem", float(ch.t_mem));
    kv("channel.emission_scale", float(ch.emission_scale));
    kv("geometry.tx_pos", vec3(&c.geometry.tx_pos));
    let rx: Vec<String> = c.geometry.rx_pos.iter().map(vec3).collect();
    kv("geometry.rx_pos", format!("[{}]", rx.join(", ")));
    kv("modulation.n_dim", c.scheme.n_dim.to_string());
    kv("modulation.m_levels", c.scheme.m_levels.to_string());
    kv("modulation.t_sym", float(c.scheme.t_sym));
    kv("frame.n_pilot", c.n_pilot.to_string());
    kv("frame.n_data", c.n_data.to_string());
    kv("frame.pilot_seed", seed(c.pilot_seed));
    kv("link.snr_db", float(c.snr_db));
    let comb: Vec<String> = c.combiners.iter().map(|k| format!("\"{k}\"")).collect();
    kv("link.combiners", format!("[{}]", comb.join(", ")));
    kv(
        "equalizer.mode",
        match c.equalizer {
            EqualizerMode::AffineMmse => "\"affine-mmse\"",
            EqualizerMode::None => "\"none\"",
        }
        .into(),
    );
    kv(
        "equalizer.stage",
        match c.equalizer_stage {
            EqualizerStage::PostCombine => "\"post-combine\"",
            EqualizerStage::PerReceiver => "\"per-receiver\"",
        }
        .into(),
    );
    kv("equalizer.ridge", auto(c.ridge));
    kv("combining.dgc_std", auto(c.dgc_std));
    kv("frontend.sync_offset", auto(c.sync_offset));
    kv("run.master_seed", seed(c.master_seed));
    kv("run.n_trials", c.n_trials.to_string());
    s
}

/// First 16 hex digits of the SHA-256 of the serialized configuration.
pub fn config_hash(c: &SimConfig) -> String {
    let digest = Sha256::digest(serialize_config(c).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
