use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use datadiet_core::cohort::{cohort_stats, CohortManifest, TracerBreakdown};

use crate::CmdStatus;

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn pct(fraction: Option<f64>) -> String {
    match fraction {
        Some(f) => format!("{:.2}%", f * 100.0),
        None => "-".to_string(),
    }
}

fn table_row(name: &str, b: &TracerBreakdown) -> String {
    format!(
        "{name:<6} {:>6} {:>9} {:>6} {:>8} {:>8} {:>10}",
        b.count,
        pct(b.fraction),
        b.sick,
        b.healthy,
        b.unknown,
        pct(b.sick_rate)
    )
}

fn csv_value(fraction: Option<f64>) -> String {
    fraction.map(|f| f.to_string()).unwrap_or_default()
}

pub fn run(args: StatsArgs) -> anyhow::Result<CmdStatus> {
    let manifest = CohortManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    let stats = cohort_stats(&manifest);

    println!("total samples: {}", stats.total);
    println!(
        "{:<6} {:>6} {:>9} {:>6} {:>8} {:>8} {:>10}",
        "tracer", "count", "fraction", "sick", "healthy", "unknown", "sick_rate"
    );
    println!("{}", table_row("FDG", &stats.fdg));
    println!("{}", table_row("PSMA", &stats.psma));
    if stats.missing_metrics > 0 {
        println!(
            "note: {} record(s) carry no metrics and are excluded from metric aggregations",
            stats.missing_metrics
        );
    }

    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("tracer,count,fraction,sick,healthy,unknown,sick_rate\n");
        for (name, b) in [("FDG", &stats.fdg), ("PSMA", &stats.psma)] {
            csv.push_str(&format!(
                "{name},{},{},{},{},{},{}\n",
                b.count,
                csv_value(b.fraction),
                b.sick,
                b.healthy,
                b.unknown,
                csv_value(b.sick_rate)
            ));
        }
        std::fs::write(csv_path, csv)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        println!("wrote {}", csv_path.display());
    }
    Ok(CmdStatus::Success)
}
