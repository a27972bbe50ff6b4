use std::collections::BTreeMap;

use super::{report, EvalReport};
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackBreakdown {
    pub pooled: EvalReport,
    /// Sorted by attack id.
    pub per_attack: Vec<EvalReport>,
    pub macro_all: f64,
    /// Macro-average over the named subset, in percent.
    pub macro_subset: Option<(Vec<String>, f64)>,
}

/// One EER per attack (all targets against that attack's non-targets) plus
/// macro-averages over every attack and over `subset` when given.
pub fn per_attack_eers(scores: &ScoreSet, subset: Option<&[String]>) -> Result<AttackBreakdown> {
    let pooled = report("pooled", scores)?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut targets = Vec::new();
    for (i, t) in scores.trials.iter().enumerate() {
        if t.label.is_target() {
            targets.push(i);
        } else {
            let a = t
                .attack_id
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("spoof trial `{}` has no attack id", t.utt_id)))?;
            groups.entry(a).or_default().push(i);
        }
    }
    let mut per_attack = Vec::with_capacity(groups.len());
    for (attack, idx) in &groups {
        let sub = ScoreSet::new(targets.iter().chain(idx).map(|&i| scores.trials[i].clone()).collect());
        per_attack.push(report(attack, &sub)?);
    }
    let macro_all = per_attack.iter().map(|r| r.eer_percent).sum::<f64>() / per_attack.len() as f64;
    let macro_subset = match subset {
        None => None,
        Some(names) => {
            if names.is_empty() {
                return Err(Error::invalid("empty attack subset"));
            }
            let mut sum = 0.0;
            for n in names {
                let r = per_attack
                    .iter()
                    .find(|r| &r.group == n)
                    .ok_or_else(|| Error::invalid(format!("attack `{n}` has no trials")))?;
                sum += r.eer_percent;
            }
            Some((names.to_vec(), sum / names.len() as f64))
        }
    };
    Ok(AttackBreakdown {
        pooled,
        per_attack,
        macro_all,
        macro_subset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{Label, TrialScore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(i: usize, score: f64, attack: Option<&str>) -> TrialScore {
        TrialScore {
            utt_id: format!("u{i}"),
            score,
            label: if attack.is_some() { Label::Spoof } else { Label::Human },
            attack_id: attack.map(String::from),
            condition: "clean".into(),
        }
    }

    #[test]
    fn single_attack_equals_pooled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t: Vec<TrialScore> = (0..40).map(|i| trial(i, rng.random_range(0.0..2.0), None)).collect();
        t.extend((40..90).map(|i| trial(i, rng.random_range(-1.0..1.0), Some("S1"))));
        let s = ScoreSet::new(t);
        let b = per_attack_eers(&s, None).unwrap();
        assert_eq!(b.per_attack.len(), 1);
        assert_eq!(b.per_attack[0].eer_percent, b.pooled.eer_percent);
    }

    #[test]
    fn hard_attack_excluded_from_subset_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t: Vec<TrialScore> = (0..100).map(|i| trial(i, rng.random_range(0.0..2.0), None)).collect();
        for (k, a) in ["S6", "S7", "S8", "S9"].iter().enumerate() {
            t.extend((0..50).map(|j| trial(1000 + k * 50 + j, rng.random_range(-2.0..0.3), Some(a))));
        }
        t.extend((0..50).map(|j| trial(2000 + j, rng.random_range(0.0..2.0), Some("S10"))));
        let s = ScoreSet::new(t);
        let easy: Vec<String> = ["S6", "S7", "S8", "S9"].iter().map(|s| s.to_string()).collect();
        let b = per_attack_eers(&s, Some(&easy)).unwrap();
        let (_, sub) = b.macro_subset.clone().unwrap();
        assert!(sub < b.pooled.eer_percent);
        assert!(sub < b.macro_all);
        let names: Vec<&str> = b.per_attack.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(names, ["S10", "S6", "S7", "S8", "S9"]);
        assert!(per_attack_eers(&s, Some(&[])).is_err());
        assert!(per_attack_eers(&s, Some(&["S99".to_string()])).is_err());
    }

    #[test]
    fn untagged_spoof_is_rejected() {
        let mut bad = trial(1, 0.0, Some("S1"));
        bad.attack_id = None;
        let s = ScoreSet::new(vec![trial(0, 1.0, None), bad]);
        assert!(per_attack_eers(&s, None).is_err());
    }
}
