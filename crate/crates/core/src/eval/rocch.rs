use crate::error::{Error, Result};

/// One step-ROC operating point; trials scoring `>= threshold` are accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

fn check(tar: &[f64], non: &[f64]) -> Result<()> {
    if tar.is_empty() || non.is_empty() {
        return Err(Error::invalid(format!(
            "EER needs both classes ({} target, {} non-target trials)",
            tar.len(),
            non.len()
        )));
    }
    if tar.iter().chain(non).any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    Ok(())
}

/// Operating points at every distinct threshold, from accept-all
/// `(0, 1)` to reject-all `(1, 0)`. Tied scores form a single vertex.
pub fn det_points(tar: &[f64], non: &[f64]) -> Result<Vec<DetPoint>> {
    check(tar, non)?;
    let mut all: Vec<(f64, bool)> = tar.iter().map(|&s| (s, true)).chain(non.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let mut pts = Vec::with_capacity(all.len() + 1);
    let (mut miss, mut fa_rejected) = (0usize, 0usize);
    pts.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    });
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                miss += 1;
            } else {
                fa_rejected += 1;
            }
            i += 1;
        }
        pts.push(DetPoint {
            threshold: if i < all.len() { all[i].0 } else { f64::INFINITY },
            p_miss: miss as f64 / nt,
            p_fa: 1.0 - fa_rejected as f64 / nn,
        });
    }
    Ok(pts)
}

/// Vertices of the ROC convex hull as `(p_fa, p_miss)`, ascending in `p_fa`.
pub fn rocch(tar: &[f64], non: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut pts: Vec<(f64, f64)> = det_points(tar, non)?.iter().map(|p| (p.p_fa, p.p_miss)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(hull)
}

/// EER as a fraction: the largest diagonal crossing over hull segments, as in
/// the Bosaris `rocch2eer`.
pub fn eer_rocch(tar: &[f64], non: &[f64]) -> Result<f64> {
    let hull = rocch(tar, non)?;
    let mut eer = 0.0f64;
    for w in hull.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        let cand = if x1 == x2 || y1 == y2 {
            0.0
        } else {
            // a x + b y = 1 through both points; crossing at 1 / (a + b)
            let det = x1 * y2 - x2 * y1;
            if det == 0.0 {
                0.0
            } else {
                let a = (y2 - y1) / det;
                let b = (x1 - x2) / det;
                1.0 / (a + b)
            }
        };
        eer = eer.max(cand);
    }
    Ok(eer)
}
