use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{HeadTailSplit, Interaction, Slice};

/// Mean loss per slice; `None` where the slice had no rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceLosses {
    pub overall: Option<f64>,
    pub head: Option<f64>,
    pub tail: Option<f64>,
}

/// Running per-slice sums of row losses.
#[derive(Clone, Copy, Debug, Default)]
pub struct SliceAccumulator {
    sum: [f64; 3],
    n: [usize; 3],
}

impl SliceAccumulator {
    pub fn add(&mut self, rows: &[Interaction], losses: &[f64], split: &HeadTailSplit) {
        for (r, &l) in rows.iter().zip(losses) {
            let s = match split.slice_of(r.item) {
                Slice::Head => 1,
                _ => 2,
            };
            self.sum[0] += l;
            self.n[0] += 1;
            self.sum[s] += l;
            self.n[s] += 1;
        }
    }

    pub fn finish(&self) -> SliceLosses {
        let mean = |k: usize| (self.n[k] > 0).then(|| self.sum[k] / self.n[k] as f64);
        SliceLosses {
            overall: mean(0),
            head: mean(1),
            tail: mean(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based epoch index across all stages of one model.
    pub epoch: usize,
    /// 1-based stage index.
    pub stage: usize,
    pub stage_name: String,
    /// Which parameter set the record describes (e.g. `theta_star`).
    pub model: String,
    /// Mean minibatch objective over the epoch.
    pub objective: f64,
    pub train: SliceLosses,
    pub validation: SliceLosses,
    /// Parameter-distance term of the joint objective, averaged over the
    /// epoch's batches.
    pub distance: Option<f64>,
}

const HEADER: &str = "model\tstage\tstage_name\tepoch\tobjective\ttrain_overall\ttrain_head\ttrain_tail\tval_overall\tval_head\tval_tail\tdistance";

/// Tab-separated rendering, one line per epoch; missing values are `NA`.
pub fn curve_tsv(points: &[CurvePoint]) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
    let mut out = String::from(HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.model,
            p.stage,
            p.stage_name,
            p.epoch,
            p.objective,
            f(p.train.overall),
            f(p.train.head),
            f(p.train.tail),
            f(p.validation.overall),
            f(p.validation.head),
            f(p.validation.tail),
            f(p.distance)
        );
    }
    out
}
