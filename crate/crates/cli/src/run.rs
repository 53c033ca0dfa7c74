use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use convint_core::config::RunConfig;
use convint_core::io::{encode_slice, key_value_csv, RunDir};
use convint_core::pipeline::{run_stage, StageObserver, StageOptions, StageReport, StageSample};
use convint_core::scheme::{check_parameter_conditions, energy_gap, Mode, StageState};
use convint_core::verification::{
    holder_csv, holder_report, inductive_estimate_report, residual_boussinesq_reynolds, EstimateConstants,
    IncrementMonitor, ResidualMonitor,
};
use convint_core::{Error, Result};

use crate::Outcome;

pub const CONFIG_NAME: &str = "config.txt";

/// Run directory from `--out`, else from `out_dir` of `--config`.
pub fn resolve_root(config: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    if let Some(o) = out {
        return Ok(o.to_path_buf());
    }
    match config {
        Some(c) => Ok(read_config(c)?.out_dir),
        None => Err(Error::Config { key: "out_dir".into(), message: "pass --out or --config".into() }),
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    RunConfig::parse(&text)
}

pub fn open_run(root: &Path) -> Result<RunDir> {
    if !root.join(convint_core::io::MANIFEST_NAME).exists() {
        return Err(Error::Config {
            key: "out_dir".into(),
            message: format!("{} is not an initialised run directory", root.display()),
        });
    }
    RunDir::open(root)
}

pub fn load_config(rd: &RunDir) -> Result<RunConfig> {
    let entry = rd
        .manifest
        .files_of_kind("config")
        .next()
        .ok_or_else(|| Error::Format("manifest lists no configuration".into()))?;
    let bytes = rd.read_checked(entry)?;
    RunConfig::parse(&String::from_utf8_lossy(&bytes))
}

fn parameters_csv(cfg: &RunConfig, stages: usize) -> Result<String> {
    let s = cfg.schedule()?;
    let mut out = String::new();
    for q in 0..stages.max(2) {
        let csv = check_parameter_conditions(&s, q).to_csv();
        out.push_str(if q == 0 { &csv } else { csv.split_once('\n').map_or("", |x| x.1) });
    }
    Ok(out)
}

pub fn cmd_init(config: &Path, out: Option<&Path>) -> Result<RunDir> {
    let mut cfg = read_config(config)?;
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    let mut rd = RunDir::create(&cfg.out_dir)?;
    rd.manifest = Default::default();
    rd.write(CONFIG_NAME, "config", cfg.to_text().as_bytes())?;
    rd.write("parameters.csv", "table", parameters_csv(&cfg, 2)?.as_bytes())?;
    rd.manifest.set_meta("stages_done", "none");
    rd.manifest.set_meta("mode", cfg.mode.to_string());
    rd.manifest.set_meta("N", cfg.n.to_string());
    rd.manifest.set_meta("n_t", cfg.n_t.to_string());
    rd.save_manifest()?;
    eprintln!("initialised {}", rd.root().display());
    Ok(rd)
}

/// Drop every output of an earlier run except the configuration.
fn clear_outputs(rd: &mut RunDir) -> Result<()> {
    let mut kept = Vec::new();
    for f in std::mem::take(&mut rd.manifest.files) {
        if f.kind == "config" {
            kept.push(f);
        } else {
            let p = rd.path(&f.path);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    rd.manifest.files = kept;
    Ok(())
}

pub fn dump_indices(n_t: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..n_t).filter(move |&j| j % stride == 0 || j + 1 == n_t)
}

fn dump_name(q: usize, j: usize) -> String {
    format!("stage_{q}/dump_{j:04}.bin")
}

struct DumpWriter<'a> {
    dir: &'a mut RunDir,
    q: usize,
    stride: usize,
    n_t: usize,
}

impl StageObserver for DumpWriter<'_> {
    fn observe(&mut self, s: &StageSample) -> Result<()> {
        if s.j % self.stride == 0 || s.j + 1 == self.n_t {
            self.dir.write(&dump_name(self.q, s.j), "dump", &encode_slice(self.q, s.next))?;
        }
        Ok(())
    }
}

fn row(k: &str, v: f64) -> (String, String) {
    (k.to_string(), format!("{v:.9e}"))
}

fn write_stage_zero(rd: &mut RunDir, cfg: &RunConfig, state: &dyn StageState) -> Result<()> {
    eprintln!("stage 0: initial tuple");
    for j in dump_indices(cfg.n_t, cfg.dump_stride) {
        rd.write(&dump_name(0, j), "dump", &encode_slice(0, &state.slice(j)?))?;
    }
    let e = cfg.energy()?;
    let delta1 = cfg.schedule()?.delta(1);
    let gap = energy_gap(state, &e, delta1)?;
    eprintln!("stage 0: residual");
    let res = residual_boussinesq_reynolds(state)?;
    rd.write("stage_0/energy_gap.csv", "table", gap.to_csv().as_bytes())?;
    rd.write("stage_0/residual.csv", "table", res.to_csv().as_bytes())?;
    let rows = vec![
        ("q".to_string(), "0".to_string()),
        row("energy_gap", gap.max_normalized),
        row("residual_momentum", res.momentum_sup),
        row("residual_divergence", res.divergence_sup),
        row("residual_temperature", res.temperature_sup),
    ];
    rd.write("stage_0/summary.csv", "summary", key_value_csv(&rows).as_bytes())?;
    Ok(())
}

fn write_stage(
    rd: &mut RunDir,
    cfg: &RunConfig,
    rep: &StageReport,
    res: &ResidualMonitor,
    inc: &IncrementMonitor,
    all: &[&StageReport],
) -> Result<()> {
    let q1 = rep.params.q + 1;
    let dir = format!("stage_{q1}");
    let r = res.report()?;
    let constants =
        EstimateConstants { eta: cfg.eta, m: cfg.m_const, c: cfg.c_const, ..EstimateConstants::default() };
    let est = inductive_estimate_report(&inc.measurements()?, &rep.params, &cfg.energy()?, &constants);
    let mut rows = rep.summary_rows();
    rows.extend([
        row("residual_momentum", r.momentum_sup),
        row("residual_divergence", r.divergence_sup),
        row("residual_temperature", r.temperature_sup),
        ("estimates_all_hold".to_string(), est.rows.iter().all(|r| r.holds()).to_string()),
    ]);
    let mut ti = String::from("t,increment\n");
    for (t, v) in &rep.theta_increment {
        ti.push_str(&format!("{t:.9},{v:.12e}\n"));
    }
    let schedule = cfg.schedule()?;
    rd.write(&format!("{dir}/summary.csv"), "summary", key_value_csv(&rows).as_bytes())?;
    rd.write(&format!("{dir}/stress.csv"), "table", rep.stress.to_csv().as_bytes())?;
    rd.write(&format!("{dir}/residual.csv"), "table", r.to_csv().as_bytes())?;
    rd.write(&format!("{dir}/estimates.csv"), "table", est.to_csv().as_bytes())?;
    rd.write(&format!("{dir}/holder.csv"), "table", holder_csv(&holder_report(all, &schedule, cfg.m_const)).as_bytes())?;
    rd.write(&format!("{dir}/energy_gap.csv"), "table", rep.exit_gap.to_csv().as_bytes())?;
    rd.write(&format!("{dir}/theta_increment.csv"), "table", ti.as_bytes())?;
    rd.write(&format!("{dir}/parameters.csv"), "table", rep.gate.to_csv().as_bytes())?;
    Ok(())
}

pub fn cmd_run(config: Option<&Path>, out: Option<&Path>, stages: usize, mode: Option<Mode>) -> Result<Outcome> {
    let root = resolve_root(config, out)?;
    let mut rd = match (config, root.join(convint_core::io::MANIFEST_NAME).exists()) {
        (Some(c), false) => cmd_init(c, Some(&root))?,
        _ => open_run(&root)?,
    };
    let mut cfg = load_config(&rd)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    clear_outputs(&mut rd)?;
    rd.manifest.set_meta("mode", cfg.mode.to_string());
    rd.manifest.set_meta("stages_done", "none");
    rd.write("parameters.csv", "table", parameters_csv(&cfg, stages)?.as_bytes())?;
    rd.save_manifest()?;
    let result = build(&mut rd, &cfg, stages);
    rd.save_manifest()?;
    result.map(|_| Outcome::Pass)
}

fn build(rd: &mut RunDir, cfg: &RunConfig, stages: usize) -> Result<()> {
    let schedule = cfg.schedule()?;
    if cfg.mode == Mode::Strict {
        for q in 0..stages.max(1) {
            let gate = check_parameter_conditions(&schedule, q);
            if !gate.all_hold() {
                eprint!("{}", gate.to_csv());
                return Err(Error::StrictGate(format!(
                    "parameter conditions fail at q = {q}: {}",
                    gate.violations().join(", ")
                )));
            }
        }
    }
    let e = cfg.energy()?;
    let initial = Arc::new(cfg.initial_state()?);
    write_stage_zero(rd, cfg, initial.as_ref())?;
    rd.manifest.set_meta("stages_done", "0");
    rd.save_manifest()?;

    let opts = StageOptions::default();
    let time = cfg.time()?;
    let mut prev: Arc<dyn StageState> = initial;
    let mut reports: Vec<StageReport> = Vec::new();
    for q in 0..stages {
        let mut res = ResidualMonitor::new(time);
        let mut inc = IncrementMonitor::new(time, opts.c1_stride);
        let (state, rep) = {
            let mut dumps = DumpWriter { dir: rd, q: q + 1, stride: cfg.dump_stride, n_t: cfg.n_t };
            let mut obs: [&mut dyn StageObserver; 3] = [&mut res, &mut inc, &mut dumps];
            run_stage(prev, &schedule, &e, &opts, &mut obs, &mut |p| {
                let sample = p.strip_prefix("sample ").and_then(|s| s.split('/').next()).and_then(|s| s.parse::<usize>().ok());
                if sample.is_none_or(|j| j % 64 == 0) {
                    eprintln!("stage {q} -> {}: {p}", q + 1);
                }
            })?
        };
        reports.push(rep);
        let refs: Vec<&StageReport> = reports.iter().collect();
        write_stage(rd, cfg, reports.last().unwrap(), &res, &inc, &refs)?;
        rd.manifest.set_meta("stages_done", (q + 1).to_string());
        rd.save_manifest()?;
        prev = Arc::new(state);
    }
    Ok(())
}
