//! CSV output. Every file starts with one `#` provenance line carrying the
//! crate version, the configuration hash, the master seed and the command.
//! Floats are written in shortest round-trip form, so identical runs give
//! byte-identical files.

use std::path::{Path, PathBuf};

use flowdiv_core::channel::ConcentrationTrace;
use flowdiv_core::frontend::ReceiverObservation;
use flowdiv_core::link::SimConfig;

use crate::experiments::{ConstellationDump, DetectionRow, GridRun, PairedRow, ScanResult};
use crate::{config_hash, Result, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

impl Provenance {
    pub fn new(config: &SimConfig, command: &str) -> Self {
        Self {
            config_hash: config_hash(config),
            seed: config.master_seed,
            command: command.to_string(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "# flowdiv {} config_hash={} seed={} command={}\n",
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.seed,
            self.command
        )
    }
}

struct Table {
    head: String,
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(prov: &Provenance, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Self { head: prov.line(), w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    fn finish(self) -> Result<String> {
        let body = self.w.into_inner().map_err(|e| SimError::io("csv buffer", e.into_error()))?;
        Ok(self.head + &String::from_utf8(body).expect("csv fields are utf-8"))
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn detection_csv(prov: &Provenance, rows: &[DetectionRow]) -> Result<String> {
    let mut t = Table::new(
        prov,
        &[
            "combiner", "snr_db", "ser", "ber", "n_data", "n_trials", "n_rx", "delta_y_m", "n_dim", "m_levels",
            "symbol_errors", "bit_errors", "ser_ci_lo", "ser_ci_hi", "ber_ci_lo", "ber_ci_hi",
        ],
    )?;
    for r in rows {
        t.row([
            r.combiner.to_string(),
            r.snr_db.to_string(),
            r.ser.to_string(),
            opt(r.ber),
            r.n_data.to_string(),
            r.n_trials.to_string(),
            r.n_rx.to_string(),
            opt(r.delta_y),
            r.n_dim.to_string(),
            r.m_levels.to_string(),
            r.symbol_errors.to_string(),
            opt(r.bit_errors),
            r.ser_ci.0.to_string(),
            r.ser_ci.1.to_string(),
            opt(r.ber_ci.map(|c| c.0)),
            opt(r.ber_ci.map(|c| c.1)),
        ])?;
    }
    t.finish()
}

/// One row per trial, point and combiner.
pub fn trials_csv(prov: &Provenance, run: &GridRun) -> Result<String> {
    let mut t = Table::new(
        prov,
        &[
            "trial", "snr_db", "n_rx", "combiner", "symbol_errors", "bit_errors", "ser", "ber", "noise_std", "agc_gain",
            "training_mse",
        ],
    )?;
    for (p, results) in run.points.iter().zip(&run.results) {
        for r in results {
            for o in &r.outcomes {
                t.row([
                    r.trial.to_string(),
                    p.snr_db.to_string(),
                    p.n_rx.to_string(),
                    o.kind.to_string(),
                    o.detection.symbol_errors.to_string(),
                    opt(o.detection.bit_errors),
                    o.detection.ser.to_string(),
                    opt(o.detection.ber),
                    r.noise_std.to_string(),
                    o.gain.to_string(),
                    opt(o.training_mse),
                ])?;
            }
        }
    }
    t.finish()
}

pub fn weights_csv(prov: &Provenance, run: &GridRun) -> Result<String> {
    let mut t = Table::new(prov, &["trial", "snr_db", "n_rx", "combiner", "rx", "pilot_energy", "weight"])?;
    for (p, results) in run.points.iter().zip(&run.results) {
        for r in results {
            for o in &r.outcomes {
                for (j, w) in o.weights.values().iter().enumerate() {
                    t.row([
                        r.trial.to_string(),
                        p.snr_db.to_string(),
                        p.n_rx.to_string(),
                        o.kind.to_string(),
                        j.to_string(),
                        r.pilot_energies[j].to_string(),
                        w.to_string(),
                    ])?;
                }
            }
        }
    }
    t.finish()
}

pub fn paired_csv(prov: &Provenance, rows: &[PairedRow]) -> Result<String> {
    let mut t = Table::new(
        prov,
        &["n_dim", "m_levels", "snr_db", "n_rx", "combiner", "reference", "wins", "losses", "ties", "p_value"],
    )?;
    for r in rows {
        t.row([
            r.n_dim.to_string(),
            r.m_levels.to_string(),
            r.point.snr_db.to_string(),
            r.point.n_rx.to_string(),
            r.combiner.to_string(),
            r.reference.to_string(),
            r.test.wins.to_string(),
            r.test.losses.to_string(),
            r.test.ties.to_string(),
            r.test.p_value.to_string(),
        ])?;
    }
    t.finish()
}

pub fn scan_csv(prov: &Provenance, scan: &ScanResult) -> Result<String> {
    let mut t = Table::new(prov, &["y_m", "p_hat", "ci_lo", "ci_hi", "n_mc", "eta", "target", "hits"])?;
    for r in &scan.rows {
        t.row([
            r.y.to_string(),
            r.p_hat.to_string(),
            r.ci.0.to_string(),
            r.ci.1.to_string(),
            r.n_mc.to_string(),
            r.eta.to_string(),
            r.target.to_string(),
            r.hits.to_string(),
        ])?;
    }
    t.finish()
}

pub fn critical_distance_csv(prov: &Provenance, scan: &ScanResult) -> Result<String> {
    let mut t = Table::new(prov, &["eta", "delta", "y_c_m"])?;
    t.row([scan.eta.to_string(), scan.delta.to_string(), opt(scan.y_c)])?;
    t.finish()
}

pub fn constellation_csv(prov: &Provenance, dump: &ConstellationDump) -> Result<String> {
    let n = dump.vectors.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..n).map(|i| format!("dim{i}")).collect();
    header.push("decided".into());
    header.push("truth".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(prov, &header)?;
    for ((v, d), tr) in dump.vectors.iter().zip(&dump.decided).zip(&dump.truth) {
        let mut fields: Vec<String> = v.iter().map(f64::to_string).collect();
        fields.push(d.to_string());
        fields.push(tr.to_string());
        t.row(fields)?;
    }
    t.finish()
}

/// `t_s,rx0,rx1,...`, one row per channel tick, 9 significant digits.
pub fn trace_csv(prov: &Provenance, traces: &[ConcentrationTrace]) -> Result<String> {
    let mut header = vec!["t_s".to_string()];
    header.extend((0..traces.len()).map(|j| format!("rx{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(prov, &header)?;
    let (len, rate) = traces.first().map_or((0, 1.0), |tr| (tr.len(), tr.rate));
    for k in 0..len {
        let mut fields = vec![format!("{:.8e}", k as f64 / rate)];
        fields.extend(traces.iter().map(|tr| format!("{:.8e}", tr.values[k])));
        t.row(fields)?;
    }
    t.finish()
}

/// `rx,symbol_index,dim0,...` for every receiver and transmitted symbol.
pub fn observations_csv(prov: &Provenance, obs: &[ReceiverObservation]) -> Result<String> {
    let n = obs.first().and_then(|o| o.symbol_vectors.first()).map_or(0, Vec::len);
    let mut header = vec!["rx".to_string(), "symbol_index".to_string()];
    header.extend((0..n).map(|i| format!("dim{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(prov, &header)?;
    for o in obs {
        for (k, w) in o.symbol_vectors.iter().enumerate() {
            let mut fields = vec![o.rx_index.to_string(), k.to_string()];
            fields.extend(w.iter().map(f64::to_string));
            t.row(fields)?;
        }
    }
    t.finish()
}

pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| SimError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowdiv_core::combining::CombinerKind;

    fn prov() -> Provenance {
        Provenance {
            config_hash: "abc".into(),
            seed: 9,
            command: "test".into(),
        }
    }

    #[test]
    fn provenance_first() {
        let s = critical_distance_csv(
            &prov(),
            &ScanResult {
                rows: vec![],
                y_c: Some(0.002),
                eta: 0.7,
                delta: 0.1,
            },
        )
        .unwrap();
        let mut lines = s.lines();
        assert!(lines.next().unwrap().starts_with("# flowdiv "));
        assert_eq!(lines.next(), Some("eta,delta,y_c_m"));
        assert_eq!(lines.next(), Some("0.7,0.1,0.002"));
    }

    #[test]
    fn detection_header_leads_with_standard_columns() {
        let row = DetectionRow {
            combiner: CombinerKind::Egc,
            n_dim: 2,
            m_levels: 4,
            snr_db: -5.0,
            n_rx: 5,
            delta_y: None,
            n_data: 1000,
            n_trials: 1,
            symbol_errors: 149,
            bit_errors: None,
            ser: 0.149,
            ber: None,
            ser_ci: (0.1, 0.2),
            ber_ci: None,
        };
        let s = detection_csv(&prov(), &[row]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[1].starts_with("combiner,snr_db,ser,ber,n_data,n_trials,"));
        assert!(lines[2].starts_with("egc,-5,0.149,,1000,1,5,,2,4,149,,"));
    }

    #[test]
    fn trace_format() {
        let tr = ConcentrationTrace {
            rate: 1000.0,
            values: vec![0.0, 1.234567891234e-5],
        };
        let s = trace_csv(&prov(), &[tr]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "t_s,rx0");
        assert_eq!(lines[2], "0.00000000e0,0.00000000e0");
        assert_eq!(lines[3], "1.00000000e-3,1.23456789e-5");
    }
}
