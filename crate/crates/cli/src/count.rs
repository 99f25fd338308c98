//! `combnet count`: per-layer parameter and FLOP accounting.

use std::fmt::Write as _;

use combnet_core::config::Config;
use combnet_core::graph::{account, init_weights, io, validate_config, Accounting, HeadSet, ValidationReport};

use crate::{graph_for, CliResult};

pub const TARGET_PARAMS: f64 = 41_000.0;
pub const TARGET_FLOPS: f64 = 35.0e6;
pub const BUDGET_TOLERANCE: f64 = 0.25;
pub const WEIGHT_FILE_LIMIT: u64 = 300 * 1000;

#[derive(Debug, Clone)]
pub struct CountReport {
    pub config_hash: u64,
    /// Deployed network: encoder, decoder, primary and visibility heads.
    pub inference: Accounting,
    /// Every head, for reference.
    pub training: Accounting,
    /// Serialized size of the deployed weights.
    pub weight_file_bytes: u64,
    pub validation: ValidationReport,
}

fn relative(x: f64, target: f64) -> f64 {
    (x - target) / target
}

impl CountReport {
    pub fn params(&self) -> u64 {
        self.inference.params()
    }

    pub fn flops(&self) -> u64 {
        self.inference.flops()
    }

    pub fn params_delta(&self) -> f64 {
        relative(self.params() as f64, TARGET_PARAMS)
    }

    pub fn flops_delta(&self) -> f64 {
        relative(self.flops() as f64, TARGET_FLOPS)
    }

    pub fn within_budget(&self) -> bool {
        self.params_delta().abs() <= BUDGET_TOLERANCE
            && self.flops_delta().abs() <= BUDGET_TOLERANCE
            && self.weight_file_bytes <= WEIGHT_FILE_LIMIT
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config hash {:016x}", self.config_hash);
        let _ = writeln!(
            s,
            "{:<28} {:<9} {:>14} {:>8} {:>10} {:>11}",
            "layer", "kind", "output", "params", "MACs", "FLOPs"
        );
        for r in &self.inference.rows {
            let out = format!("{}x{}x{}", r.output.c, r.output.h, r.output.w);
            let _ = writeln!(
                s,
                "{:<28} {:<9} {:>14} {:>8} {:>10} {:>11}",
                r.name,
                format!("{:?}", r.kind).to_lowercase(),
                out,
                r.params,
                r.macs,
                r.flops()
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "total params   {:>10}  ({:.6} M, {:+.1}% vs 0.041 M)",
            self.params(),
            self.params() as f64 / 1e6,
            100.0 * self.params_delta()
        );
        let _ = writeln!(
            s,
            "total FLOPs    {:>10}  ({:.6} G, {:+.1}% vs 0.035 G)",
            self.flops(),
            self.flops() as f64 / 1e9,
            100.0 * self.flops_delta()
        );
        let _ = writeln!(s, "total MACs     {:>10}", self.inference.macs());
        let _ = writeln!(
            s,
            "weight file    {:>10}  bytes ({} limit {} bytes)",
            self.weight_file_bytes,
            if self.weight_file_bytes <= WEIGHT_FILE_LIMIT { "within" } else { "over" },
            WEIGHT_FILE_LIMIT
        );
        let _ = writeln!(
            s,
            "all heads      {:>10}  params, {} FLOPs (training only)",
            self.training.params(),
            self.training.flops()
        );
        for w in &self.validation.alignment_warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for v in &self.validation.violations {
            let _ = writeln!(s, "note: {v}");
        }
        let _ = writeln!(s, "budget {}", if self.within_budget() { "OK" } else { "EXCEEDED" });
        s
    }
}

pub fn run(cfg: &Config, seed: u64) -> CliResult<CountReport> {
    let g = graph_for(cfg)?;
    let inference = account(&g, HeadSet::InferenceHeads)?;
    let training = account(&g, HeadSet::AllHeads)?;
    let deployed = init_weights(&g, seed).inference_subset(&g)?;
    let weight_file_bytes = io::encode(&deployed)?.len() as u64;
    Ok(CountReport {
        config_hash: g.config.hash(),
        inference,
        training,
        weight_file_bytes,
        validation: validate_config(&g, cfg.network.lane_width),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use combnet_core::config::NetworkConfig;

    #[test]
    fn reference_within_budget() {
        let r = run(&Config::default(), 1).unwrap();
        assert!(r.within_budget(), "{}", r.render());
        let rows: u64 = r.inference.rows.iter().map(|x| x.params).sum();
        assert_eq!(rows, r.params());
    }

    #[test]
    fn wider_tier3_costs_more() {
        let mut cfg = Config::default();
        cfg.network = NetworkConfig {
            tier_channels: [16, 32, 128],
            ..NetworkConfig::default()
        };
        let wide = run(&cfg, 1).unwrap();
        assert!(wide.params() > run(&Config::default(), 1).unwrap().params());
    }
}
