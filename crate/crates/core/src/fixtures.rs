//! Published benchmark numbers embedded for arithmetic regression checks.
//!
//! Columns follow the CSV files under `fixtures/`. Empty cells are `None`.

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::analysis::{GapRecord, Metric};

const TRANSFER_GAP: &str = include_str!("../fixtures/biqa_transfer_gap.csv");
const TRANSFER_MEAN_GAP: &str = include_str!("../fixtures/biqa_transfer_mean_gap.csv");
const IN_DOMAIN: &str = include_str!("../fixtures/in_domain.csv");
const CROSS_GAIN: &str = include_str!("../fixtures/cross_gain.csv");
const CROSS_MEAN_GAIN: &str = include_str!("../fixtures/cross_mean_gain.csv");
const DEBIASED: &str = include_str!("../fixtures/debiased.csv");
const DEBIASED_MEAN: &str = include_str!("../fixtures/debiased_mean.csv");
const GLOBAL_RANKING: &str = include_str!("../fixtures/global_ranking.csv");

/// Database column order of the published tables.
pub const DATABASES: [&str; 7] = ["CVIQ", "OIQA", "MVAQD", "IQA-ODI", "OSIQA", "OIQ-10K", "JUFE-10K"];

/// Zero-shot transfer of a planar-image model: baseline `p_ori` on its
/// pretraining set, transferred `p_test`, printed gap in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferGap {
    pub model: String,
    pub database: String,
    pub metric: Metric,
    pub p_ori: Option<f64>,
    pub p_test: f64,
    pub printed_gap: Option<f64>,
}

impl TransferGap {
    pub fn to_record(&self) -> GapRecord {
        GapRecord::new(&self.model, &self.database, self.metric, self.p_ori, self.p_test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedMeanGap {
    pub database: String,
    pub metric: Metric,
    pub printed_mean_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    /// Plain backbone with average pooling.
    M1,
    /// Panorama-specific design.
    M2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InDomain {
    pub model: String,
    pub design: Design,
    pub database: String,
    pub plcc: f64,
    pub srcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossGain {
    pub source: String,
    pub model: String,
    pub target: String,
    pub metric: Metric,
    pub p_test: f64,
    pub printed_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMeanGain {
    pub source: String,
    pub target: String,
    pub metric: Metric,
    pub printed_mean_gain: f64,
}

/// Performance of a model trained on `source` and tested on a debiased mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Debiased {
    pub model: String,
    pub source: String,
    pub plcc: f64,
    pub srcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedMean {
    pub source: String,
    pub plcc: f64,
    pub srcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRank {
    pub database: String,
    pub q1: usize,
    pub q2: usize,
    pub q3: usize,
    pub t: usize,
    #[serde(rename = "final")]
    pub final_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFixtures {
    pub transfer_gaps: Vec<TransferGap>,
    pub transfer_mean_gaps: Vec<PrintedMeanGap>,
    pub in_domain: Vec<InDomain>,
    pub cross_gains: Vec<CrossGain>,
    pub cross_mean_gains: Vec<CrossMeanGain>,
    pub debiased: Vec<Debiased>,
    pub debiased_means: Vec<DebiasedMean>,
    pub global_ranking: Vec<GlobalRank>,
}

fn parse<T: DeserializeOwned>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .expect("embedded fixture parses")
}

/// All embedded fixtures.
pub fn benchmark_fixtures() -> BenchmarkFixtures {
    BenchmarkFixtures {
        transfer_gaps: parse(TRANSFER_GAP),
        transfer_mean_gaps: parse(TRANSFER_MEAN_GAP),
        in_domain: parse(IN_DOMAIN),
        cross_gains: parse(CROSS_GAIN),
        cross_mean_gains: parse(CROSS_MEAN_GAIN),
        debiased: parse(DEBIASED),
        debiased_means: parse(DEBIASED_MEAN),
        global_ranking: parse(GLOBAL_RANKING),
    }
}

impl BenchmarkFixtures {
    pub fn transfer_gap(&self, model: &str, database: &str, metric: Metric) -> Option<&TransferGap> {
        self.transfer_gaps
            .iter()
            .find(|g| g.model == model && g.database == database && g.metric == metric)
    }

    /// Models whose transfer gap is defined (known baseline).
    pub fn models_with_defined_gap(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for g in &self.transfer_gaps {
            if g.p_ori.is_some() && !out.contains(&g.model.as_str()) {
                out.push(&g.model);
            }
        }
        out
    }

    pub fn in_domain(&self, model: &str, database: &str) -> Option<&InDomain> {
        self.in_domain
            .iter()
            .find(|r| r.model == model && r.database == database)
    }

    pub fn in_domain_metric(&self, model: &str, database: &str, metric: Metric) -> Option<f64> {
        self.in_domain(model, database).map(|r| match metric {
            Metric::Plcc => r.plcc,
            Metric::Srcc => r.srcc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sizes() {
        let f = benchmark_fixtures();
        assert_eq!(f.transfer_gaps.len(), 8 * 7 * 2);
        assert_eq!(f.transfer_mean_gaps.len(), 14);
        assert_eq!(f.in_domain.len(), 15 * 7);
        assert_eq!(f.cross_gains.len(), 7 * 8 * 6 * 2);
        assert_eq!(f.cross_mean_gains.len(), 7 * 6 * 2);
        assert_eq!(f.debiased.len(), 8 * 7);
        assert_eq!(f.debiased_means.len(), 7);
        assert_eq!(f.global_ranking.len(), 7);
    }

    #[test]
    fn lookups() {
        let f = benchmark_fixtures();
        let g = f.transfer_gap("HyperIQA", "CVIQ", Metric::Plcc).unwrap();
        assert_eq!((g.p_ori, g.p_test, g.printed_gap), (Some(0.917), 0.725, Some(-20.9)));
        assert_eq!(f.models_with_defined_gap().len(), 7);
        assert!(!f.models_with_defined_gap().contains(&"QualiCLIP"));
        assert_eq!(f.in_domain_metric("MC360IQA", "CVIQ", Metric::Plcc), Some(0.951));
        assert_eq!(f.in_domain("MC360IQA", "CVIQ").unwrap().design, Design::M2);
    }
}
