//! `hgsep evaluate`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hgsep_core::bsseval::{evaluate_track, summarize, write_report, write_summary, DecompositionConfig, EvalResult};
use hgsep_core::datasets::Split;
use hgsep_core::inference::{separate, RatioMaskOracle};
use hgsep_core::{AudioClip, Checkpoint, ClipRecord, MaskEstimator, Network, SeparationConfig};
use log::{error, info};

use crate::config::{usage, RunConfig};
use crate::train::load_split;

enum Estimator {
    Network(Network, SeparationConfig),
    Oracle(SeparationConfig),
}

fn score(record: &ClipRecord, estimator: &Estimator, decomposition: &DecompositionConfig) -> Result<Vec<EvalResult>> {
    let (config, oracle);
    let est: &dyn MaskEstimator = match estimator {
        Estimator::Network(net, cfg) => {
            config = *cfg;
            net
        }
        Estimator::Oracle(cfg) => {
            config = *cfg;
            oracle = RatioMaskOracle::new(&record.mixture, &record.sources, cfg)?;
            &oracle
        }
    };
    let out = separate(&record.mixture, est, &config)?;
    let estimates: Vec<Vec<f64>> = out.sources.iter().map(AudioClip::to_f64).collect();
    let references: Vec<Vec<f64>> = record.sources.iter().map(AudioClip::to_f64).collect();
    Ok(evaluate_track(
        &record.id,
        &record.source_names,
        &estimates,
        &references,
        &record.mixture.to_f64(),
        decomposition,
    )?)
}

pub fn run(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let estimator = match checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            if ckpt.source_names != cfg.task.source_names() {
                return Err(usage(format!(
                    "checkpoint separates {:?} but task `{}` needs {:?}",
                    ckpt.source_names,
                    cfg.task,
                    cfg.task.source_names()
                )));
            }
            let sep = SeparationConfig::for_checkpoint(&ckpt);
            Estimator::Network(Network::new(ckpt.network, ckpt.params)?, sep)
        }
        None => Estimator::Oracle(cfg.separation()),
    };
    let decomposition = DecompositionConfig {
        filter_len: cfg.filter_len,
        ..DecompositionConfig::default()
    };
    let records = load_split(cfg, Split::Test)?;
    if records.is_empty() {
        bail!("the test split of {} is empty", cfg.data_root()?.display());
    }

    let mut results = Vec::new();
    let mut failed = 0usize;
    for (i, record) in records.iter().enumerate() {
        match score(record, &estimator, &decomposition) {
            Ok(rows) => {
                for r in &rows {
                    info!(
                        "[{}/{}] {} {}: SDR {:.2}  SIR {:.2}  SAR {:.2}  NSDR {:.2}",
                        i + 1,
                        records.len(),
                        r.track,
                        r.source,
                        r.sdr,
                        r.sir,
                        r.sar,
                        r.nsdr
                    );
                }
                results.extend(rows);
            }
            Err(e) => {
                error!("{}: {e:#}", record.id);
                failed += 1;
            }
        }
    }

    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    if !results.is_empty() {
        write_report(cfg.out_dir.join("report.csv"), &results)?;
        let summary = summarize(&results)?;
        for s in &summary {
            info!(
                "{}: GNSDR {:.2}  GSIR {:.2}  GSAR {:.2}  median SDR {:.2} over {} tracks",
                s.source, s.gnsdr, s.gsir, s.gsar, s.median_sdr, s.tracks
            );
        }
        write_summary(cfg.out_dir.join("summary.csv"), &summary)?;
    }
    if failed > 0 {
        bail!("{failed} of {} tracks failed to evaluate", records.len());
    }
    Ok(())
}
