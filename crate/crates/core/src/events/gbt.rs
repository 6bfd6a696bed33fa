//! Gradient boosting with logistic loss over regression stumps.

use serde::{Deserialize, Serialize};

use crate::error::EventsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    /// `x[feature] <= threshold` goes left.
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub rounds: usize,
    pub shrinkage: f64,
    /// Only depth-1 trees are supported.
    pub depth: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            shrinkage: 0.1,
            depth: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub num_features: usize,
    pub base: f64,
    pub shrinkage: f64,
    pub stumps: Vec<Stump>,
}

impl GbtModel {
    /// Raw score (log-odds scale).
    pub fn score(&self, x: &[f64]) -> f64 {
        self.base + self.shrinkage * self.stumps.iter().map(|s| s.eval(x)).sum::<f64>()
    }
}

/// Mean logistic loss `log(1 + exp(-y F))`.
pub fn logistic_loss(scores: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&f, &y)| {
            let m = -y * f;
            // Stable softplus.
            if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        })
        .sum();
    total / scores.len() as f64
}

fn newton_value(res: impl Iterator<Item = f64>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in res {
        num += r;
        den += r.abs() * (1.0 - r.abs());
    }
    if den < 1e-12 {
        0.0
    } else {
        num / den
    }
}

/// Trains on `(features, label)` pairs with labels `+1`/`-1`. The split
/// search is exhaustive over data midpoints; ties go to the lowest feature
/// and then the lowest threshold. A round whose step would raise the
/// training loss is retried with the step halved.
pub fn train_gbt(x: &[Vec<f64>], y: &[f64], params: &GbtParams) -> Result<GbtModel, EventsError> {
    if x.is_empty() {
        return Err(EventsError::Empty);
    }
    let nf = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != nf) {
        return Err(EventsError::Schema {
            expected: nf,
            got: row.len(),
        });
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(EventsError::SingleClass);
    }
    assert_eq!(params.depth, 1, "only stumps are supported");
    let n = x.len();
    let rate = pos as f64 / n as f64;
    let base = (rate / (1.0 - rate)).ln();
    let order: Vec<Vec<usize>> = (0..nf)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut model = GbtModel {
        num_features: nf,
        base,
        shrinkage: params.shrinkage,
        stumps: Vec::new(),
    };
    let mut scores = vec![base; n];
    let mut loss = logistic_loss(&scores, y);
    for _ in 0..params.rounds.max(1) {
        let res: Vec<f64> = scores
            .iter()
            .zip(y)
            .map(|(&f, &yy)| yy / (1.0 + (yy * f).exp()))
            .collect();
        let total: f64 = res.iter().sum();
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, idx) in order.iter().enumerate() {
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += res[idx[k]];
                let (lo, hi) = (x[idx[k]][f], x[idx[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right = total - left;
                let gain = left * left / nl + right * right / nr - total * total / n as f64;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (lo + hi)));
                }
            }
        }
        let mut stump = match best {
            Some((_, f, t)) => {
                let left = newton_value((0..n).filter(|&i| x[i][f] <= t).map(|i| res[i]));
                let right = newton_value((0..n).filter(|&i| x[i][f] > t).map(|i| res[i]));
                Stump {
                    feature: f,
                    threshold: t,
                    left,
                    right,
                }
            }
            None => {
                let v = newton_value(res.iter().copied());
                Stump {
                    feature: 0,
                    threshold: f64::MAX,
                    left: v,
                    right: v,
                }
            }
        };
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = scores
                .iter()
                .zip(x)
                .map(|(&s, xi)| s + params.shrinkage * stump.eval(xi))
                .collect();
            let l = logistic_loss(&trial, y);
            if l <= loss {
                scores = trial;
                loss = l;
                accepted = true;
                break;
            }
            stump.left *= 0.5;
            stump.right *= 0.5;
        }
        if !accepted {
            if model.stumps.is_empty() {
                model.stumps.push(Stump {
                    left: 0.0,
                    right: 0.0,
                    ..stump
                });
            }
            break;
        }
        model.stumps.push(stump);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accuracy(m: &GbtModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let ok = x
            .iter()
            .zip(y)
            .filter(|(xi, &yi)| (m.score(xi) > 0.0) == (yi > 0.0))
            .count();
        ok as f64 / y.len() as f64
    }

    #[test]
    fn separable_toy_set() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 + if i >= 10 { 5.0 } else { 0.0 }])
            .collect();
        let y: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.0 } else { -1.0 }).collect();
        let m = train_gbt(
            &x,
            &y,
            &GbtParams {
                rounds: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
        assert_eq!(m.stumps[0].threshold, 12.0);
    }

    #[test]
    fn constant_feature_scores_zero() {
        let x = vec![vec![3.0, 1.0]; 10];
        let y: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let m = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert!(!m.stumps.is_empty());
        assert!(m.score(&x[0]).abs() < 1e-12);
        assert_eq!(accuracy(&m, &x, &y), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_gbt(&x, &[1.0, 1.0], &GbtParams::default()),
            Err(EventsError::SingleClass)
        ));
        assert!(matches!(
            train_gbt(&[], &[], &GbtParams::default()),
            Err(EventsError::Empty)
        ));
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        // Both features separate the classes equally well.
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ];
        let y = vec![-1.0, -1.0, 1.0, 1.0];
        let m = train_gbt(
            &x,
            &y,
            &GbtParams {
                rounds: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.stumps[0].feature, 0);
        assert_eq!(m.stumps[0].threshold, 1.5);
    }
}
