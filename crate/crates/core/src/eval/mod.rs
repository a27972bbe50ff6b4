//! Detection metrics: ROCCH equal error rate, DET operating points,
//! per-attack aggregation and long-term average spectra.

mod attack;
mod ltas;
mod rocch;

pub use attack::{per_attack_eers, AttackBreakdown};
pub use ltas::{compute_ltas, LtasProfile};
pub use rocch::{det_points, eer_rocch, rocch, DetPoint};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::io::write_atomic;
use crate::scores::ScoreSet;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub group: String,
    pub eer_percent: f64,
    pub det_points: Vec<DetPoint>,
    pub n_target: usize,
    pub n_nontarget: usize,
}

pub fn compute_eer_rocch(scores: &ScoreSet) -> Result<EvalReport> {
    report("pooled", scores)
}

pub(crate) fn report(group: &str, scores: &ScoreSet) -> Result<EvalReport> {
    let (tar, non) = scores.split();
    let eer = eer_rocch(&tar, &non)?;
    Ok(EvalReport {
        group: group.to_string(),
        eer_percent: 100.0 * eer,
        det_points: det_points(&tar, &non)?,
        n_target: tar.len(),
        n_nontarget: non.len(),
    })
}

/// Rows of `group  eer_percent  n_target  n_nontarget`, EER to two decimals.
pub fn reports_tsv(reports: &[EvalReport]) -> String {
    let mut s = String::from("group\teer_percent\tn_target\tn_nontarget\n");
    for r in reports {
        let _ = writeln!(s, "{}\t{:.2}\t{}\t{}", r.group, r.eer_percent, r.n_target, r.n_nontarget);
    }
    s
}

pub fn write_det_csv(path: &Path, points: &[DetPoint]) -> Result<()> {
    write_atomic(path, |w| {
        use std::io::Write;
        writeln!(w, "threshold,p_miss,p_fa")?;
        for p in points {
            writeln!(w, "{},{},{}", p.threshold, p.p_miss, p.p_fa)?;
        }
        Ok(())
    })
}
