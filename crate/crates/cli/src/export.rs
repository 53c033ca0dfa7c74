use std::path::Path;

use clap::ValueEnum;
use convint_core::fields::ScalarField;
use convint_core::io::{decode_slice, fields_csv};
use convint_core::{Error, Result};

use crate::run::{open_run, resolve_root};
use crate::Format;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum What {
    V,
    P,
    Theta,
    R,
    Stress,
    EnergyGap,
    Estimates,
    Holder,
    Residual,
    ThetaIncrement,
    Summary,
    Parameters,
}

impl What {
    fn table(self) -> Option<&'static str> {
        Some(match self {
            What::Stress => "stress",
            What::EnergyGap => "energy_gap",
            What::Estimates => "estimates",
            What::Holder => "holder",
            What::Residual => "residual",
            What::ThetaIncrement => "theta_increment",
            What::Summary => "summary",
            What::Parameters => "parameters",
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            What::V => "v",
            What::P => "p",
            What::Theta => "theta",
            What::R => "r",
            w => w.table().unwrap(),
        }
    }
}

/// `[magic | n | t | ncomp | components]`, little endian.
fn binary(t: f64, fields: &[&ScalarField]) -> Vec<u8> {
    let n = fields[0].grid().n();
    let mut out = Vec::new();
    out.extend_from_slice(b"CVIEXP01");
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&(fields.len() as u64).to_le_bytes());
    for f in fields {
        for x in f.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn cmd_export(
    config: Option<&Path>,
    out: Option<&Path>,
    what: What,
    stage: Option<usize>,
    t: f64,
    format: Format,
) -> Result<()> {
    let mut rd = open_run(&resolve_root(config, out)?)?;
    let done: usize = rd
        .manifest
        .meta("stages_done")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config { key: "stage".into(), message: "the run has no stages yet".into() })?;
    let q = stage.unwrap_or(done);
    if q > done {
        return Err(Error::Config { key: "stage".into(), message: format!("only stages 0..={done} exist") });
    }
    let (rel, bytes) = if let Some(table) = what.table() {
        if format == Format::Binary {
            return Err(Error::Config { key: "format".into(), message: "tables export as csv only".into() });
        }
        let src = if what == What::Parameters && q == 0 { "parameters.csv".to_string() } else { format!("stage_{q}/{table}.csv") };
        let entry = rd
            .manifest
            .files
            .iter()
            .find(|f| f.path == src)
            .ok_or_else(|| Error::Config { key: "what".into(), message: format!("stage {q} has no {table} table") })?;
        (format!("exports/{table}_q{q}.csv"), rd.read_checked(entry)?)
    } else {
        let prefix = format!("stage_{q}/");
        let mut best: Option<(f64, Vec<u8>)> = None;
        for f in rd.manifest.files_of_kind("dump").filter(|f| f.path.starts_with(&prefix)) {
            let bytes = rd.read_checked(f)?;
            let (_, s) = decode_slice(&bytes)?;
            if best.as_ref().is_none_or(|(bt, _)| (s.t - t).abs() < (bt - t).abs()) {
                best = Some((s.t, bytes));
            }
        }
        let (ts, bytes) = best.ok_or_else(|| Error::Format(format!("stage {q} has no field dumps")))?;
        let (_, s) = decode_slice(&bytes)?;
        let (names, fields): (Vec<&str>, Vec<&ScalarField>) = match what {
            What::V => (vec!["v1", "v2"], vec![&s.v.u1, &s.v.u2]),
            What::P => (vec!["p"], vec![&s.p]),
            What::Theta => (vec!["theta"], vec![&s.theta]),
            _ => (vec!["r11", "r12"], vec![&s.r.t11, &s.r.t12]),
        };
        let stem = format!("exports/{}_q{q}_t{ts:.6}", what.name());
        match format {
            Format::Csv => (format!("{stem}.csv"), fields_csv(&names, &fields).into_bytes()),
            Format::Binary => (format!("{stem}.bin"), binary(ts, &fields)),
        }
    };
    rd.write(&rel, "export", &bytes)?;
    rd.save_manifest()?;
    println!("{}", rd.path(&rel).display());
    Ok(())
}
