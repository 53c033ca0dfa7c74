use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;
use convint_core::fields::divergence;
use convint_core::io::{decode_slice, RunDir};
use convint_core::verification::{
    antidiv_probe_default, forced_heat_probe_default, stationary_phase_probe_default,
};
use convint_core::{Error, Result};

use crate::run::{open_run, resolve_root};
use crate::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Probe {
    Antidiv,
    ForcedHeat,
    StationaryPhase,
    All,
}

pub const REPORT_NAME: &str = "verify_report.txt";

/// Pinned thresholds: `(summary key, stage 0 limit, later-stage limit)`.
const LIMITS: [(&str, Option<f64>, Option<f64>); 7] = [
    ("energy_gap", Some(1e-10), None),
    ("residual_momentum", Some(1e-9), Some(5e-6)),
    ("residual_divergence", Some(1e-10), Some(1e-10)),
    ("max_div", None, Some(1e-10)),
    ("max_trace", None, Some(1e-14)),
    ("osc_crosscheck", None, Some(1e-9)),
    ("theta_mean", None, Some(1e-12)),
];
const DUMP_DIV: f64 = 1e-10;
const DUMP_THETA_MEAN: f64 = 1e-12;

struct Check {
    name: String,
    value: String,
    limit: String,
    pass: bool,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check { name: name.into(), value: format!("{value:.6e}"), limit: format!("{limit:.1e}"), pass: value <= limit }
    }

    fn flag(name: impl Into<String>, value: &str, pass: bool) -> Check {
        Check { name: name.into(), value: value.to_string(), limit: "true".into(), pass }
    }
}

fn summary(rd: &RunDir, q: usize) -> Result<Vec<(String, String)>> {
    let path = format!("stage_{q}/summary.csv");
    let entry = rd
        .manifest
        .files
        .iter()
        .find(|f| f.path == path)
        .ok_or_else(|| Error::Format(format!("manifest lists no {path}")))?;
    let text = String::from_utf8_lossy(&rd.read_checked(entry)?).into_owned();
    Ok(text.lines().skip(1).filter_map(|l| l.split_once(',')).map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

fn number(rows: &[(String, String)], key: &str) -> Result<f64> {
    rows.iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("summary lacks a numeric {key}")))
}

fn text<'a>(rows: &'a [(String, String)], key: &str) -> &'a str {
    rows.iter().find(|(k, _)| k == key).map_or("", |(_, v)| v.as_str())
}

fn stage_checks(rd: &RunDir, q: usize, strict: bool, checks: &mut Vec<Check>) -> Result<()> {
    let rows = summary(rd, q)?;
    for (key, zero, later) in LIMITS {
        if let Some(limit) = if q == 0 { zero } else { later } {
            checks.push(Check::le(format!("stage_{q}.{key}"), number(&rows, key)?, limit));
        }
    }
    if q > 0 {
        let inc = number(&rows, "theta_increment_max")?;
        let bound = number(&rows, "theta_increment_bound")?;
        checks.push(Check::le(format!("stage_{q}.theta_increment"), inc, bound));
        if strict {
            for key in ["gate_all_hold", "estimates_all_hold"] {
                let v = text(&rows, key);
                checks.push(Check::flag(format!("stage_{q}.{key}"), v, v == "true"));
            }
        }
    }
    Ok(())
}

fn dump_checks(rd: &RunDir, checks: &mut Vec<Check>) -> Result<()> {
    let mut div: f64 = 0.0;
    let mut mean: f64 = 0.0;
    let mut count = 0;
    for f in rd.manifest.files_of_kind("dump") {
        let (_, s) = decode_slice(&rd.read_checked(f)?)?;
        div = div.max(divergence(&s.v).sup_norm());
        mean = mean.max(s.theta.mean().abs());
        count += 1;
    }
    checks.push(Check::le(format!("dumps.divergence ({count} files)"), div, DUMP_DIV));
    checks.push(Check::le("dumps.theta_mean", mean, DUMP_THETA_MEAN));
    Ok(())
}

fn render(checks: &[Check], header: &[(String, String)]) -> (String, bool) {
    let pass = checks.iter().all(|c| c.pass);
    let mut s = String::from("# verification report\n");
    for (k, v) in header {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.push_str("check,value,limit,pass\n");
    for c in checks {
        s.push_str(&format!("{},{},{},{}\n", c.name, c.value, c.limit, c.pass));
    }
    s.push_str(&format!("result = {}\n", if pass { "pass" } else { "fail" }));
    (s, pass)
}

fn verify_run(root: &Path, det: bool) -> Result<Outcome> {
    let started = Instant::now();
    let mut rd = open_run(root)?;
    let mut checks = Vec::new();
    let bad: Vec<String> =
        rd.verify_checksums().into_iter().filter(|p| p != REPORT_NAME).collect();
    for p in &bad {
        eprintln!("checksum mismatch for {p}");
    }
    let files = rd.manifest.files.iter().filter(|f| f.path != REPORT_NAME).count();
    checks.push(Check {
        name: format!("checksums ({files} files)"),
        value: bad.len().to_string(),
        limit: "0".into(),
        pass: bad.is_empty(),
    });
    if !bad.is_empty() {
        let (report, _) = render(&checks, &[]);
        print!("{report}");
        return Err(Error::Checksum(bad.join(", ")));
    }
    let mode = rd.manifest.meta("mode").unwrap_or("toy").to_string();
    let stages = rd.manifest.meta("stages_done").unwrap_or("none").to_string();
    if let Ok(done) = stages.parse::<usize>() {
        for q in 0..=done {
            stage_checks(&rd, q, mode == "strict", &mut checks)?;
        }
        dump_checks(&rd, &mut checks)?;
    } else {
        checks.push(Check::flag("stages_built", "false", false));
    }
    let mut header = vec![("mode".to_string(), mode), ("stages_done".to_string(), stages)];
    if !det {
        header.push(("elapsed_s".to_string(), format!("{:.3}", started.elapsed().as_secs_f64())));
    }
    let (report, pass) = render(&checks, &header);
    print!("{report}");
    rd.write(REPORT_NAME, "verify", report.as_bytes())?;
    rd.save_manifest()?;
    Ok(if pass { Outcome::Pass } else { Outcome::ChecksFailed })
}

fn run_probes(probe: Probe) -> Result<(Vec<Check>, String)> {
    let mut checks = Vec::new();
    let mut csv = String::from("probe,lambda,measured,slope\n");
    let mut table = |name: &str, rows: &[(f64, f64)], slope: f64| {
        for (l, m) in rows {
            csv.push_str(&format!("{name},{l},{m:.9e},{slope:.6}\n"));
        }
    };
    if matches!(probe, Probe::Antidiv | Probe::All) {
        for (a, t) in antidiv_probe_default()? {
            table(&format!("antidiv_alpha_{a}"), &t.rows, t.slope);
            checks.push(Check::le(format!("antidiv_alpha_{a}.slope"), t.slope, a - 1.0 + 0.15));
        }
    }
    if matches!(probe, Probe::ForcedHeat | Probe::All) {
        let p = forced_heat_probe_default()?;
        table("forced_heat_theta", &p.theta.rows, p.theta.slope);
        table("forced_heat_gradient", &p.gradient.rows, p.gradient.slope);
        let window = (p.theta.slope + 1.0).abs() <= 0.15;
        checks.push(Check {
            name: "forced_heat.slope_in_window".into(),
            value: format!("{:.6}", p.theta.slope),
            limit: "-1+-0.15".into(),
            pass: window,
        });
        checks.push(Check::le("forced_heat.slope_bound", p.theta.slope, -1.0 + 0.15));
    }
    if matches!(probe, Probe::StationaryPhase | Probe::All) {
        let t = stationary_phase_probe_default()?;
        table("stationary_phase", &t.rows, t.slope);
        checks.push(Check::le("stationary_phase.slope", t.slope, -2.0 + 0.2));
    }
    Ok((checks, csv))
}

pub fn cmd_verify(config: Option<&Path>, out: Option<&Path>, probe: Option<Probe>, det: bool) -> Result<Outcome> {
    let Some(probe) = probe else {
        return verify_run(&resolve_root(config, out)?, det);
    };
    let (checks, csv) = run_probes(probe)?;
    let (report, pass) = render(&checks, &[]);
    print!("{report}");
    if out.is_some() || config.is_some() {
        let mut rd = open_run(&resolve_root(config, out)?)?;
        rd.write("probes.csv", "probe", csv.as_bytes())?;
        rd.save_manifest()?;
    }
    Ok(if pass { Outcome::Pass } else { Outcome::ChecksFailed })
}
