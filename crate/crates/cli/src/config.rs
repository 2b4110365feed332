//! Plain-text key = value configuration with CLI flag overrides, and the
//! fully-resolved parameter record every run prints.
//!
//! Precedence: built-in defaults, then the config file, then explicit CLI
//! flags. Unknown keys are an error so typos fail loudly instead of
//! silently running the defaults.

use std::collections::BTreeMap;
use std::path::Path;

use lvann_core::reduction::{ParamRecord, TopConfig};

use crate::error::HarnessError;

/// Everything a run needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub seed: u64,
    pub queries: usize,
    /// strict = full splitter enumeration (unconditional guarantee).
    pub strict: bool,
    pub trials: usize,
    /// Filter dimension for verify-family / estimate-rho / sphere-demo.
    pub b: Option<usize>,
    /// Ball radius override for verify-family / estimate-rho.
    pub w: Option<f64>,
    /// Near radius for the sphere demo.
    pub r: f64,
    pub top: TopConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            n: 2000,
            d: 128,
            c: 2.0,
            seed: 0,
            queries: 500,
            strict: false,
            trials: 200_000,
            b: None,
            w: None,
            r: 0.5,
            top: TopConfig::default(),
        }
    }
}

/// CLI flags that may override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub c: Option<f64>,
    pub mode: Option<String>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.trim().parse().map_err(|_| {
        HarnessError::Input(format!("config key {key}: cannot parse value {value:?}"))
    })
}

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Input(format!("config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Input(format!(
                "config {} line {}: expected key = value, got {line:?}",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn apply_mode(settings: &mut RunSettings, mode: &str, per_node: usize) -> Result<(), HarnessError> {
    match mode {
        "strict" => {
            settings.strict = true;
            settings.top.proj_per_node = None;
        }
        "subsampled" => {
            settings.strict = false;
            settings.top.proj_per_node = Some(per_node);
        }
        other => {
            return Err(HarnessError::Input(format!(
                "mode must be strict or subsampled, got {other:?}"
            )))
        }
    }
    Ok(())
}

/// Resolve settings from an optional config file plus CLI overrides.
pub fn resolve(config: Option<&Path>, ov: &Overrides) -> Result<RunSettings, HarnessError> {
    let mut s = RunSettings::default();
    let mut per_node = 8usize;
    let mut mode_request: Option<String> = None;
    if let Some(path) = config {
        for (key, value) in parse_config_file(path)? {
            match key.as_str() {
                "n" => s.n = parse(&key, &value)?,
                "d" => s.d = parse(&key, &value)?,
                "c" => s.c = parse(&key, &value)?,
                "seed" => s.seed = parse(&key, &value)?,
                "queries" => s.queries = parse(&key, &value)?,
                "trials" => s.trials = parse(&key, &value)?,
                "b" => s.b = Some(parse(&key, &value)?),
                "w" => s.w = Some(parse(&key, &value)?),
                "r" => s.r = parse(&key, &value)?,
                "mode" => mode_request = Some(value),
                "kappa1" => s.top.kappa1 = parse(&key, &value)?,
                "kappa2" => s.top.kappa2 = parse(&key, &value)?,
                "eps_a" => s.top.eps_a = parse(&key, &value)?,
                "eps_b" => s.top.eps_b = parse(&key, &value)?,
                "mid_dim" => s.top.mid_dim = Some(parse(&key, &value)?),
                "leaf_dim" => s.top.leaf_dim = Some(parse(&key, &value)?),
                "proj_per_node" => per_node = parse(&key, &value)?,
                "proj_eps" => {
                    let eps: Result<Vec<f64>, _> =
                        value.split(',').map(|v| parse::<f64>(&key, v)).collect();
                    s.top.proj_eps = Some(eps?);
                }
                "delta" => s.top.delta = Some(parse(&key, &value)?),
                "xi_max" => s.top.xi_max = parse(&key, &value)?,
                "decode_cap" => s.top.decode_cap = parse(&key, &value)?,
                "max_resamples" => s.top.max_resamples = parse(&key, &value)?,
                "gamma" => s.top.gamma = parse(&key, &value)?,
                "beta" => s.top.beta = parse(&key, &value)?,
                other => {
                    return Err(HarnessError::Input(format!(
                        "config {}: unknown key {other:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    if let Some(v) = ov.n {
        s.n = v;
    }
    if let Some(v) = ov.d {
        s.d = v;
    }
    if let Some(v) = ov.c {
        s.c = v;
    }
    if let Some(v) = ov.seed {
        s.seed = v;
    }
    if let Some(mode) = ov.mode.as_deref().map(String::from).or(mode_request) {
        apply_mode(&mut s, &mode, per_node)?;
    } else {
        s.top.proj_per_node = Some(per_node);
    }
    s.top.seed = s.seed;
    if !(s.c > 1.0) {
        return Err(HarnessError::Input(format!("approximation factor {} must exceed 1", s.c)));
    }
    if s.n < 2 {
        return Err(HarnessError::Input(format!("dataset size {} below 2", s.n)));
    }
    Ok(s)
}

/// The fully-resolved record a build prints, one key per line. Formula
/// values sit next to what actually ran so reports are self-describing.
pub fn render_params(p: &ParamRecord) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    kv("n", p.n.to_string());
    kv("d", p.d.to_string());
    kv("d_padded", p.d_padded.to_string());
    kv("c", format!("{}", p.c));
    kv("c_terminal", format!("{:.6}", p.c_terminal));
    kv("m_prime_formula", p.m_prime_formula.to_string());
    kv("stage1_applied", p.stage1_applied.to_string());
    kv("m_prime", p.stage1_dim.to_string());
    kv("m_formula", p.m_formula.to_string());
    kv("m", p.m.to_string());
    kv("b", p.b.to_string());
    kv("arity", p.arity.to_string());
    kv("stage2_applied", p.stage2_applied.to_string());
    kv("num_terminal", p.num_terminal.to_string());
    kv("w", format!("{:.6}", p.w));
    kv("w_formula", format!("{:.6}", p.w_formula));
    kv("delta", format!("{:.6}", p.delta));
    kv("N", p.n_offsets.to_string());
    kv("delta1", format!("{:.3e}", p.delta1));
    kv("delta2", format!("{:.3e}", p.delta2));
    kv("eps_a", format!("{}", p.eps_a));
    kv("eps_b", format!("{}", p.eps_b));
    kv("kappa1", format!("{}", p.kappa1));
    kv("kappa2", format!("{}", p.kappa2));
    kv("gamma", format!("{}", p.gamma));
    kv("beta", format!("{}", p.beta));
    kv("strict", p.strict.to_string());
    kv("seed", p.seed.to_string());
    out
}
