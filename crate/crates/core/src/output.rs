//! Run outputs: `rounds.csv`, `summary.json`, `config_echo.toml`.
//!
//! The CSV column order is a contract: `t, scheme, latency_s,
//! n_participants, global_loss, bound, cum_time_s`, then one seven-column
//! block per device id — `dev{n}_selected, dev{n}_channel, dev{n}_tau,
//! dev{n}_p, dev{n}_time_s, dev{n}_energy_j, dev{n}_aou`. Cells that do
//! not apply (bound when tracking is off, allocation columns for a device
//! that sat the round out) are left empty. Floats are printed as the
//! shortest decimal that parses back to the identical value, so the file
//! is a lossless view of the in-memory series.

use std::path::Path;

use crate::error::Error;
use crate::orchestrator::{RoundRecord, SimRun};

/// The fixed CSV header for a fleet of `num_devices`.
pub fn rounds_csv_header(num_devices: usize) -> String {
    let mut header = String::from("t,scheme,latency_s,n_participants,global_loss,bound,cum_time_s");
    for n in 0..num_devices {
        for col in ["selected", "channel", "tau", "p", "time_s", "energy_j", "aou"] {
            header.push_str(&format!(",dev{n}_{col}"));
        }
    }
    header
}

fn push_float(line: &mut String, v: f64) {
    line.push_str(&format!("{v}"));
}

/// One record as a CSV line (no trailing newline).
pub fn rounds_csv_line(record: &RoundRecord, num_devices: usize) -> String {
    assert_eq!(record.per_device.len(), num_devices, "record shape");
    let mut line = format!("{},{},", record.t, record.scheme);
    push_float(&mut line, record.latency);
    line.push_str(&format!(",{},", record.participants));
    push_float(&mut line, record.global_loss);
    line.push(',');
    if let Some(b) = record.bound {
        push_float(&mut line, b);
    }
    line.push(',');
    push_float(&mut line, record.cum_time);
    for id in 0..num_devices {
        let scheduled = record.selected.contains(&id);
        line.push_str(if scheduled { ",1" } else { ",0" });
        match &record.per_device[id] {
            Some(d) => {
                line.push_str(&format!(",{},", d.channel));
                push_float(&mut line, d.tau);
                line.push(',');
                push_float(&mut line, d.p);
                line.push(',');
                push_float(&mut line, d.time);
                line.push(',');
                push_float(&mut line, d.energy);
            }
            None => line.push_str(",,,,,"),
        }
        line.push_str(&format!(",{}", record.aou[id]));
    }
    line
}

/// The whole rounds table as CSV text.
pub fn rounds_csv(records: &[RoundRecord], num_devices: usize) -> String {
    let mut out = rounds_csv_header(num_devices);
    out.push('\n');
    for r in records {
        out.push_str(&rounds_csv_line(r, num_devices));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Writes `rounds.csv`, `summary.json`, and `config_echo.toml` into
/// `out_dir` (created if missing). Identical runs produce byte-identical
/// files.
pub fn write_outputs(run: &SimRun, num_devices: usize, out_dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display())))
    })?;
    write_file(&out_dir.join("rounds.csv"), &rounds_csv(&run.records, num_devices))?;
    let mut json = serde_json::to_string_pretty(&run.summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    json.push('\n');
    write_file(&out_dir.join("summary.json"), &json)?;
    write_file(&out_dir.join("config_echo.toml"), &run.summary.config_echo)?;
    Ok(())
}
