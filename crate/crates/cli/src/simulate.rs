use multivar_core::simulate::{generate_common_unique, generate_dataset};
use multivar_core::GeneratedDataset;
use serde_json::json;

use crate::bundle::{write_bundle, Manifest, Truth};
use crate::config::{Design, RunConfig};
use crate::error::{CliError, CliResult};

pub fn generate(design: &Design, t: usize, seed: u64) -> CliResult<GeneratedDataset<f64>> {
    let ds = match design {
        Design::Heterogeneity { spec, .. } => generate_dataset(spec, t, seed),
        Design::CommonUnique(spec) => generate_common_unique(spec, t, seed),
    };
    ds.map_err(|e| CliError::from(e).context(format!("design {}", design.label())))
}

/// Writes one simulated bundle (with truth sidecar) to `cfg.out`.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Manifest> {
    cfg.validate()?;
    let designs = cfg.designs()?;
    let [design] = designs.as_slice() else {
        return Err(CliError::validation("simulate takes exactly one condition"));
    };
    let [t] = cfg.t.as_slice() else {
        return Err(CliError::validation("simulate takes exactly one series length"));
    };
    let ds = generate(design, *t, cfg.seed)?;
    let truth = Truth::from_dataset(&ds);
    let source = json!({ "design": design.label(), "t": t, "seed": cfg.seed, "k": cfg.k, "d": cfg.d });
    write_bundle(&cfg.out, &ds.series, Some(&truth), Some(source))
}
