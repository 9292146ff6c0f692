//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Pairwise brute-force fairness metrics computed straight from rows.
pub struct OracleMetrics {
    pub dpd: f64,
    pub di: f64,
    /// `None` when some group lacks positive or negative truths.
    pub eod: Option<f64>,
}

fn rate(rows: &[(u8, u8)], keep: impl Fn(&(u8, u8)) -> bool) -> Option<f64> {
    let selected: Vec<&(u8, u8)> = rows.iter().filter(|r| keep(r)).collect();
    if selected.is_empty() {
        return None;
    }
    let pos = selected.iter().filter(|r| r.0 == 1).count();
    Some(pos as f64 / selected.len() as f64)
}

/// `groups` holds each group's (prediction, truth) rows.
pub fn fairness_oracle(groups: &[Vec<(u8, u8)>]) -> OracleMetrics {
    let mut dpd: f64 = 0.0;
    let mut di: f64 = 1.0;
    let mut eod = Some(0.0f64);
    for a in groups {
        for b in groups {
            let ra = rate(a, |_| true).unwrap();
            let rb = rate(b, |_| true).unwrap();
            dpd = dpd.max((ra - rb).abs());
            let hi = ra.max(rb);
            if hi > 0.0 {
                di = di.min(ra.min(rb) / hi);
            }
            let tpr = (rate(a, |r| r.1 == 1), rate(b, |r| r.1 == 1));
            let fpr = (rate(a, |r| r.1 == 0), rate(b, |r| r.1 == 0));
            eod = match (eod, tpr, fpr) {
                (Some(e), (Some(t1), Some(t2)), (Some(f1), Some(f2))) => {
                    Some(e.max((t1 - t2).abs()).max((f1 - f2).abs()))
                }
                _ => None,
            };
        }
    }
    OracleMetrics { dpd, di, eod }
}

/// Top-k indices by magnitude from a full sort, ties to the lower index.
pub fn top_k_oracle(w: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    let mut kept = idx[..k].to_vec();
    kept.sort_unstable();
    kept
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let (mut up, mut down) = (x.to_vec(), x.to_vec());
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}
