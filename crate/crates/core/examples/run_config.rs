//! The configuration-driven pipeline used by the `attractor` binary, called
//! in-process: parse a JSON config, solve, verify and write artifacts.
//!
//! cargo run --release --example run_config [config.json] [out-dir]

use std::path::PathBuf;

use attractor_sos::cli::{run, RunConfig};

const FALLBACK: &str = r#"{
  "name": "van_der_pol_k6",
  "mode": "continuous",
  "nvars": 2,
  "dynamics": ["2*x2", "-0.8*x1 - 10*(x1^2 - 0.21)*x2"],
  "set": {"shape": "annulus", "inner": 0.4, "outer": 2.0},
  "degree": 6,
  "beta": 0.2,
  "grid": {"resolution": 100}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::from_json(FALLBACK)?,
    };
    let out = args.next().map_or_else(|| std::env::temp_dir().join("attractor_run_config"), PathBuf::from);
    let outcome = run(&cfg, &out)?;
    print!("{}", outcome.summary.to_text());
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    println!("exit status would be {}", if outcome.success() { 0 } else { 1 });
    Ok(())
}
