use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use datadiet_core::cohort::cohort_stats;
use datadiet_core::synth::{generate_cohort, paper_cohort_spec, CohortSpec};

use crate::CmdStatus;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for volumes and manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Named cohort shape; `paper-cohort` is 1014 FDG + 597 PSMA with a 90/10
    /// PSMA sick split
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 20)]
    fdg: usize,
    #[arg(long, default_value_t = 30)]
    psma: usize,
    /// PSMA sick fraction; the sick count is ceil(rate · psma)
    #[arg(long, default_value_t = 0.9)]
    sick_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    fdg_sick_rate: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Volume dims, e.g. 16,16,16
    #[arg(long, value_name = "X,Y,Z")]
    dims: Option<String>,
}

pub fn run(args: SynthArgs) -> anyhow::Result<CmdStatus> {
    let mut spec = match args.preset.as_deref() {
        Some("paper-cohort") => paper_cohort_spec(args.seed),
        Some(other) => anyhow::bail!("unknown preset {other:?} (available: paper-cohort)"),
        None => {
            let mut spec = CohortSpec::new(args.fdg, args.psma, args.sick_rate, args.seed);
            spec.fdg_sick_rate = args.fdg_sick_rate;
            spec
        }
    };
    if let Some(dims) = &args.dims {
        let parts: Vec<usize> = dims
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing --dims {dims:?}"))?;
        anyhow::ensure!(parts.len() == 3, "--dims needs three comma-separated sizes");
        spec.dims = [parts[0], parts[1], parts[2]];
    }

    let manifest = generate_cohort(&spec, &args.out)?;
    manifest.save(args.out.join("manifest.json"))?;

    let stats = cohort_stats(&manifest);
    println!(
        "generated {} samples ({} FDG, {} PSMA; PSMA sick rate {}) in {}",
        stats.total,
        stats.fdg.count,
        stats.psma.count,
        stats
            .psma
            .sick_rate
            .map(|r| format!("{:.2}%", r * 100.0))
            .unwrap_or_else(|| "-".into()),
        args.out.display()
    );
    Ok(CmdStatus::Success)
}
