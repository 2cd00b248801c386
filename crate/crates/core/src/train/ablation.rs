use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Sample, Task};
use crate::error::Result;
use crate::model::ModelConfig;

use super::{train, MetricsReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoMultiAudio,
    NoCoAtt,
    NoMultiVisual,
    NoPtmfim,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMultiAudio,
        Variant::NoCoAtt,
        Variant::NoMultiVisual,
        Variant::NoPtmfim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMultiAudio => "wo_multi_audio",
            Variant::NoCoAtt => "wo_co_att",
            Variant::NoMultiVisual => "wo_multi_visual",
            Variant::NoPtmfim => "wo_ptmfim",
        }
    }

    /// `base` with this variant's component switched off.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        c.multi_audio = true;
        c.co_att = true;
        c.multi_visual = true;
        c.ptmfim = true;
        match self {
            Variant::Full => {}
            Variant::NoMultiAudio => c.multi_audio = false,
            Variant::NoCoAtt => c.co_att = false,
            Variant::NoMultiVisual => c.multi_visual = false,
            Variant::NoPtmfim => c.ptmfim = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub task: Task,
    /// Validation metrics of the best epoch.
    pub metrics: MetricsReport,
}

/// Trains every variant on every task with the same seed and split.
pub fn run_ablation(
    base: &ModelConfig,
    samples: &[Sample],
    tasks: &[Task],
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(tasks.len() * Variant::ALL.len());
    for &task in tasks {
        for variant in Variant::ALL {
            let mut cfg = variant.apply(base);
            cfg.n_classes = task.n_classes();
            let out = train(&cfg, samples)?;
            let row = AblationRow {
                variant,
                task,
                metrics: out.best_val,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str = "variant,task,acc_task,f1_task,acc_w,acc_u,f1_w,f1_u";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.variant, r.task, m.acc_task, m.f1_task, m.acc_weighted, m.acc_unweighted, m.f1_weighted, m.f1_unweighted
        ));
    }
    out
}
