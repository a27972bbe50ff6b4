use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scores::{ScoreSet, TrialScore};

const HEADER: &str = "utt_id\tscore\tlabel\tattack_id\tcondition";

pub fn write_scores(path: &Path, scores: &ScoreSet) -> Result<()> {
    super::write_atomic(path, |w| {
        writeln!(w, "{HEADER}")?;
        for t in &scores.trials {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                t.utt_id,
                t.score,
                t.label,
                t.attack_id.as_deref().unwrap_or("-"),
                t.condition
            )?;
        }
        Ok(())
    })
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(Error::format(origin, format!("expected header `{HEADER}`"))),
    }
    let mut trials = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::format(origin, format!("line {}: expected 5 columns", i + 1)));
        }
        let score: f64 = f[1]
            .parse()
            .map_err(|_| Error::format(&*origin, format!("line {}: bad score `{}`", i + 1, f[1])))?;
        if !score.is_finite() {
            return Err(Error::format(origin, format!("line {}: non-finite score", i + 1)));
        }
        trials.push(TrialScore {
            utt_id: f[0].to_string(),
            score,
            label: f[2]
                .parse()
                .map_err(|e| Error::format(&*origin, format!("line {}: {e}", i + 1)))?,
            attack_id: match f[3] {
                "-" | "" => None,
                a => Some(a.to_string()),
            },
            condition: f[4].to_string(),
        });
    }
    Ok(ScoreSet::new(trials))
}
