use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sparsum::experiments::{run_experiment, MeasureRow, SimConfig};

use crate::io::write_output;
use crate::{with_jobs, CliError};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with simulation settings; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination (stdout when omitted). A `<out>.meta.json` file with
    /// the resolved settings is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn values(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimFile {
    t: Option<usize>,
    m: Option<usize>,
    k_star: Option<usize>,
    p_pos: Option<usize>,
    n_neg: Option<usize>,
    s_star: Option<OneOrMany>,
    rho: Option<f64>,
    snr: Option<OneOrMany>,
    replications: Option<usize>,
    seed: Option<u64>,
    k_max: Option<usize>,
    s_steps: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Meta {
    base: SimConfig,
    snr: Vec<f64>,
    s_star: Vec<f64>,
    /// "default" when p_pos and n_neg were not given; the default split is a
    /// chosen value rather than a measured one.
    sign_split: &'static str,
    seed_source: &'static str,
}

/// Resolves the sweep: a base configuration plus the `snr` and `s_star` lists.
fn resolve(file: SimFile, env_seed: Option<&str>) -> Result<Meta, CliError> {
    let d = SimConfig::default();
    let sign_split =
        if file.p_pos.is_some() || file.n_neg.is_some() { "config" } else { "default" };
    let (seed, seed_source) = match (env_seed, file.seed) {
        (Some(raw), _) => {
            let seed = raw
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::user(format!("SPARSUM_SEED is not an integer: {raw:?}")))?;
            (seed, "env")
        }
        (None, Some(s)) => (s, "config"),
        (None, None) => (d.seed, "default"),
    };
    let snr = file.snr.map_or(vec![d.snr], OneOrMany::values);
    let s_star = file.s_star.map_or(vec![d.s_star], OneOrMany::values);
    if snr.is_empty() || s_star.is_empty() {
        return Err(CliError::user("snr and s_star lists must be nonempty"));
    }
    let base = SimConfig {
        t: file.t.unwrap_or(d.t),
        m: file.m.unwrap_or(d.m),
        k_star: file.k_star.unwrap_or(d.k_star),
        p_pos: file.p_pos.unwrap_or(d.p_pos),
        n_neg: file.n_neg.unwrap_or(d.n_neg),
        s_star: s_star[0],
        rho: file.rho.unwrap_or(d.rho),
        snr: snr[0],
        replications: file.replications.unwrap_or(d.replications),
        seed,
        k_max: file.k_max.unwrap_or(d.k_max),
        s_steps: file.s_steps.unwrap_or(d.s_steps),
    };
    for &ss in &s_star {
        for &r in &snr {
            SimConfig { s_star: ss, snr: r, ..base.clone() }.validate()?;
        }
    }
    Ok(Meta { base, snr, s_star, sign_split, seed_source })
}

fn load(path: Option<&Path>) -> Result<SimFile, CliError> {
    let Some(path) = path else {
        return Ok(SimFile::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

fn to_csv(rows: &[MeasureRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::internal(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::internal(format!("csv: {e}")))
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let env_seed = std::env::var("SPARSUM_SEED").ok();
    let meta = resolve(load(args.config.as_deref())?, env_seed.as_deref())?;
    let mut rows = Vec::new();
    for &s_star in &meta.s_star {
        for &snr in &meta.snr {
            let cfg = SimConfig { s_star, snr, ..meta.base.clone() };
            eprintln!("simulating snr={snr} s_star={s_star} ({} replications)", cfg.replications);
            let table = with_jobs(args.jobs, || run_experiment(&cfg))??;
            rows.extend(table.rows);
        }
    }
    write_output(args.out.as_deref(), &to_csv(&rows)?)?;
    if let Some(out) = &args.out {
        let mut meta_path = out.clone().into_os_string();
        meta_path.push(".meta.json");
        let text = serde_json::to_string_pretty(&meta)? + "\n";
        write_output(Some(Path::new(&meta_path)), &text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_or_list_and_defaults() {
        let file: SimFile =
            toml::from_str("snr = [0.5, 1.0]\ns_star = 0.5\nreplications = 2").unwrap();
        let meta = resolve(file, None).unwrap();
        assert_eq!(meta.snr, vec![0.5, 1.0]);
        assert_eq!(meta.s_star, vec![0.5]);
        assert_eq!(meta.base.replications, 2);
        assert_eq!(meta.base.t, SimConfig::default().t);
        assert_eq!(meta.sign_split, "default");
    }

    #[test]
    fn env_seed_wins() {
        let file: SimFile = toml::from_str("seed = 4").unwrap();
        assert_eq!(resolve(file, Some("9")).unwrap().base.seed, 9);
        let file: SimFile = toml::from_str("seed = 4").unwrap();
        assert_eq!(resolve(file, None).unwrap().base.seed, 4);
        assert!(resolve(SimFile::default(), Some("x")).is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = toml::from_str::<SimFile>("snrr = 1.0").unwrap_err();
        assert!(err.to_string().contains("snrr"));
    }
}
