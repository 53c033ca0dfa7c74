//! `key = value` run configuration.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::evolution::TimeGrid;
use crate::fields::Grid;
use crate::scheme::{initial_tuple, EnergyProfile, InitialTuple, Mode, ParamSchedule, ThetaDatum};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub a: f64,
    pub gamma: f64,
    pub lambda0: usize,
    pub lambda_ratio: f64,
    pub n: usize,
    pub n_t: usize,
    pub theta0_sin: f64,
    pub theta0_cos: f64,
    pub energy_coeffs: Vec<f64>,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub eps: f64,
    pub eta: f64,
    pub m_const: f64,
    pub c_const: f64,
    /// Write field dumps on every this-many samples.
    pub dump_stride: usize,
}

const KEYS: [&str; 17] = [
    "preset",
    "a",
    "gamma",
    "lambda0",
    "lambda_ratio",
    "N",
    "n_t",
    "theta0_sin",
    "theta0_cos",
    "energy_coeffs",
    "mode",
    "out_dir",
    "eps",
    "eta",
    "M",
    "C",
    "dump_stride",
];

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| bad(key, format!("expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| bad(key, format!("expected a non-negative integer, got {v:?}")))
}

impl RunConfig {
    fn defaults() -> RunConfig {
        RunConfig {
            preset: None,
            a: 4.0,
            gamma: 0.4,
            lambda0: 5,
            lambda_ratio: 10.0,
            n: 512,
            n_t: 257,
            theta0_sin: 1.0,
            theta0_cos: 0.0,
            energy_coeffs: Vec::new(),
            mode: Mode::Toy,
            out_dir: PathBuf::from("run"),
            eps: 0.1,
            eta: 0.1,
            m_const: 4.0,
            c_const: 4.0,
            dump_stride: 0,
        }
    }

    /// The desk preset: toy mode, `a = 4`, `λ₀ = 5`, `N = 512`, `n_t = 257`.
    pub fn desk() -> RunConfig {
        RunConfig { preset: Some("desk".into()), energy_coeffs: vec![10.0, 0.02], ..RunConfig::defaults() }
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(&format!("line {}", i + 1), format!("expected key = value, got {raw:?}")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(bad(k, "unknown key"));
            }
            if pairs.iter().any(|(p, _): &(String, String)| p == k) {
                return Err(bad(k, "given twice"));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        let mut c = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) if v == "desk" => RunConfig::desk(),
            Some((_, v)) => return Err(bad("preset", format!("unknown preset {v:?}"))),
            None => RunConfig::defaults(),
        };
        for (k, v) in &pairs {
            match k.as_str() {
                "preset" => {}
                "a" => c.a = parse_f64(k, v)?,
                "gamma" => c.gamma = parse_f64(k, v)?,
                "lambda0" => c.lambda0 = parse_usize(k, v)?,
                "lambda_ratio" => c.lambda_ratio = parse_f64(k, v)?,
                "N" => c.n = parse_usize(k, v)?,
                "n_t" => c.n_t = parse_usize(k, v)?,
                "theta0_sin" => c.theta0_sin = parse_f64(k, v)?,
                "theta0_cos" => c.theta0_cos = parse_f64(k, v)?,
                "energy_coeffs" => {
                    c.energy_coeffs = v.split(',').map(|x| parse_f64(k, x)).collect::<Result<Vec<f64>>>()?;
                }
                "mode" => c.mode = v.parse()?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                "eps" => c.eps = parse_f64(k, v)?,
                "eta" => c.eta = parse_f64(k, v)?,
                "M" => c.m_const = parse_f64(k, v)?,
                "C" => c.c_const = parse_f64(k, v)?,
                "dump_stride" => c.dump_stride = parse_usize(k, v)?,
                _ => unreachable!(),
            }
        }
        if c.energy_coeffs.is_empty() {
            return Err(bad("energy_coeffs", "required (comma-separated cosine coefficients of e(t))"));
        }
        if c.dump_stride == 0 {
            c.dump_stride = ((c.n_t.saturating_sub(1)) / 16).max(1);
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        EnergyProfile::new(self.energy_coeffs.clone())?;
        self.schedule()?;
        Grid::new(self.n).map_err(|e| bad("N", e.to_string()))?;
        if self.n_t < 5 {
            return Err(bad("n_t", "needs at least 5 samples"));
        }
        if self.mode == Mode::Toy && (self.lambda0 == 0 || self.lambda0 % 5 != 0) {
            return Err(bad("lambda0", format!("must be a positive multiple of 5, got {}", self.lambda0)));
        }
        for (k, v) in [("eps", self.eps), ("eta", self.eta), ("M", self.m_const), ("C", self.c_const)] {
            if !(v > 0.0) {
                return Err(bad(k, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<ParamSchedule> {
        let mut s = ParamSchedule::new(self.a, self.gamma, self.mode)?;
        s.eps = self.eps;
        s.eta = self.eta;
        if self.mode == Mode::Toy {
            s = s.with_toy_frequencies(self.lambda0, self.lambda_ratio)?;
        }
        Ok(s)
    }

    pub fn energy(&self) -> Result<EnergyProfile> {
        EnergyProfile::new(self.energy_coeffs.clone())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.n_t)
    }

    /// Stage-zero state; in strict mode `λ₀` comes from the schedule.
    pub fn initial_state(&self) -> Result<InitialTuple> {
        let s = self.schedule()?;
        let lambda0 = s.lambda_int(0)?;
        initial_tuple(
            &self.energy()?,
            ThetaDatum { sin: self.theta0_sin, cos: self.theta0_cos },
            lambda0,
            s.delta(1),
            self.grid()?,
            self.time()?,
        )
    }

    /// Canonical text form with every key filled in.
    pub fn to_text(&self) -> String {
        let coeffs: Vec<String> = self.energy_coeffs.iter().map(|c| format!("{c}")).collect();
        let mut s = String::new();
        if let Some(p) = &self.preset {
            s.push_str(&format!("preset = {p}\n"));
        }
        s.push_str(&format!(
            "a = {}\ngamma = {}\nlambda0 = {}\nlambda_ratio = {}\nN = {}\nn_t = {}\ntheta0_sin = {}\ntheta0_cos = {}\n\
             energy_coeffs = {}\nmode = {}\nout_dir = {}\neps = {}\neta = {}\nM = {}\nC = {}\ndump_stride = {}\n",
            self.a,
            self.gamma,
            self.lambda0,
            self.lambda_ratio,
            self.n,
            self.n_t,
            self.theta0_sin,
            self.theta0_cos,
            coeffs.join(", "),
            self.mode,
            self.out_dir.display(),
            self.eps,
            self.eta,
            self.m_const,
            self.c_const,
            self.dump_stride
        ));
        s
    }
}
