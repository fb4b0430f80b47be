//! Recall@k evaluation.
//!
//! For each test triple every item is scored for `(q, u)` and ranked by
//! descending score, ties broken by ascending item id. The positive item
//! stays in the candidate set. Recall@k is 1 when the positive lands in
//! the first `k` positions; with one positive per triple,
//! precision@k = recall@k / k.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::content::FeatureContext;
use crate::data::Triple;
use crate::error::{Error, Result};
use crate::model::{score_columns, Model, ScoreVector, Task};

pub const DEFAULT_KS: [usize; 4] = [5, 10, 30, 50];
pub const TIE_BREAK: &str = "ascending-item-id";

/// Anything that can score every item for a `(query, user)` pair.
pub trait Scorer: Sync {
    fn num_items(&self) -> usize;

    /// Writes `f(q, u, i)` for every item `i` into `out`.
    fn score_into(&self, q: usize, u: usize, out: &mut [f64]) -> Result<()>;

    fn name(&self) -> String;

    fn score_all(&self, q: usize, u: usize) -> Result<ScoreVector> {
        let mut out = vec![0.0; self.num_items()];
        self.score_into(q, u, &mut out)?;
        Ok(ScoreVector(out))
    }
}

/// Scores a trained model under its layout, optionally restricted to the
/// query x item or user x item term.
pub struct LcrScorer<'a> {
    model: &'a Model,
    ctx: FeatureContext<'a>,
    items: Cow<'a, DMatrix<f64>>,
    task: Task,
}

impl<'a> LcrScorer<'a> {
    pub fn new(model: &'a Model, ctx: FeatureContext<'a>) -> Result<Self> {
        ctx.check(model)?;
        let items = model.effective_items(&ctx)?;
        Ok(LcrScorer { model, ctx, items, task: model.task })
    }

    /// Scores with only the terms of `task`.
    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }
}

impl Scorer for LcrScorer<'_> {
    fn num_items(&self) -> usize {
        self.model.num_items()
    }

    fn score_into(&self, q: usize, u: usize, out: &mut [f64]) -> Result<()> {
        self.model.check_user(u)?;
        let query = self.model.query_embedding(q, &self.ctx)?;
        let left = self.model.left_factor_for(self.task, u, &query);
        let scores = score_columns(&left, &self.items);
        out.copy_from_slice(&scores);
        Ok(())
    }

    fn name(&self) -> String {
        format!("lcr-{}-{}", self.model.variant().name(), self.task.name())
    }
}

/// 0-based position of `positive` when items are sorted by descending
/// score with ties broken by ascending id.
pub fn rank_position(scores: &[f64], positive: usize) -> usize {
    let target = scores[positive];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > target || (s == target && j < positive))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scorer: String,
    pub num_triples: usize,
    pub ks: Vec<usize>,
    /// Number of triples whose positive landed in the top `k`, per `k`.
    pub hits: Vec<usize>,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub tie_break: &'static str,
    pub seconds: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    /// `key=value` records, one line per `k`.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(
                out,
                "scorer={} triples={} k={} hits={} recall={} precision={} tie_break={}",
                self.scorer, self.num_triples, k, self.hits[i], self.recall[i], self.precision[i], self.tie_break
            );
        }
        out
    }
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidConfig("at least one k is required".into()));
    }
    if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("k values must be positive and strictly ascending".into()));
    }
    Ok(())
}

/// Ranks of the positives of `test`, computed in parallel.
pub fn positions<S: Scorer + ?Sized>(scorer: &S, test: &[Triple]) -> Result<Vec<usize>> {
    let num_items = scorer.num_items();
    test.par_iter()
        .map_init(
            || vec![0.0; num_items],
            |buf, t| {
                let (q, u, d) = t.ids();
                if d >= num_items {
                    return Err(Error::IdOutOfRange { kind: crate::error::IdKind::Item, id: d, count: num_items });
                }
                scorer.score_into(q, u, buf)?;
                Ok(rank_position(buf, d))
            },
        )
        .collect()
}

/// Mean recall@k (and precision@k) of `scorer` over `test`.
pub fn recall_at_k<S: Scorer + ?Sized>(scorer: &S, test: &[Triple], ks: &[usize]) -> Result<EvalReport> {
    check_ks(ks)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set"));
    }
    let start = Instant::now();
    let pos = positions(scorer, test)?;
    let hits: Vec<usize> = ks.iter().map(|&k| pos.iter().filter(|&&p| p < k).count()).collect();
    let n = test.len() as f64;
    let recall: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let precision = recall.iter().zip(ks).map(|(r, &k)| r / k as f64).collect();
    Ok(EvalReport {
        scorer: scorer.name(),
        num_triples: test.len(),
        ks: ks.to_vec(),
        hits,
        recall,
        precision,
        tie_break: TIE_BREAK,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Aligned text table of several reports sharing the same `k` list,
/// recall as percentages.
pub fn render_table(reports: &[EvalReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let width = reports.iter().map(|r| r.scorer.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}", "METHOD");
    for k in &first.ks {
        let _ = write!(out, " {:>8}", format!("R@{k}"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}", r.scorer);
        for v in &r.recall {
            let _ = write!(out, " {:>8}", format!("{:.2}%", 100.0 * v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn num_items(&self) -> usize {
            self.0.len()
        }
        fn score_into(&self, _q: usize, _u: usize, out: &mut [f64]) -> Result<()> {
            out.copy_from_slice(&self.0);
            Ok(())
        }
        fn name(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn argmax_positive_hits_everywhere() {
        let s = Fixed(vec![0.1, 0.9, 0.3]);
        let r = recall_at_k(&s, &[Triple::new(0, 0, 1)], &[1, 2, 3]).unwrap();
        assert_eq!(r.recall, vec![1.0, 1.0, 1.0]);
        assert_eq!(r.precision, vec![1.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn boundary_position() {
        // item 2 is third: recall@3 = 1, recall@2 = 0
        let s = Fixed(vec![0.9, 0.8, 0.7, 0.1]);
        let r = recall_at_k(&s, &[Triple::new(0, 0, 2)], &[2, 3]).unwrap();
        assert_eq!(r.recall, vec![0.0, 1.0]);
    }

    #[test]
    fn ties_break_by_item_id() {
        let scores = [1.0, 1.0, 1.0];
        assert_eq!(rank_position(&scores, 0), 0);
        assert_eq!(rank_position(&scores, 2), 2);
    }

    #[test]
    fn bad_inputs() {
        let s = Fixed(vec![0.0; 3]);
        assert!(matches!(recall_at_k(&s, &[], &[1]), Err(Error::EmptyDataset(_))));
        assert!(recall_at_k(&s, &[Triple::new(0, 0, 0)], &[]).is_err());
        assert!(recall_at_k(&s, &[Triple::new(0, 0, 0)], &[5, 1]).is_err());
        assert!(recall_at_k(&s, &[Triple::new(0, 0, 0)], &[0]).is_err());
        assert!(recall_at_k(&s, &[Triple::new(0, 0, 7)], &[1]).is_err());
    }

    #[test]
    fn records_and_table() {
        let s = Fixed(vec![0.1, 0.9]);
        let r = recall_at_k(&s, &[Triple::new(0, 0, 0), Triple::new(0, 0, 1)], &[1, 2]).unwrap();
        assert_eq!(
            r.to_records(),
            "scorer=fixed triples=2 k=1 hits=1 recall=0.5 precision=0.5 tie_break=ascending-item-id\n\
             scorer=fixed triples=2 k=2 hits=2 recall=1 precision=0.5 tie_break=ascending-item-id\n"
        );
        let table = render_table(&[r]);
        assert!(table.starts_with("METHOD"));
        assert!(table.contains("50.00%"));
        assert!(table.contains("100.00%"));
    }
}
