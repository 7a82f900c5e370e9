//! Held-out metrics over bag-level predictions: precision-recall curve, AUC,
//! the max-F1 operating point, P@N and macro Hits@K on long-tail relations.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::{read_to_string, write_string};
use crate::mutrel::NA_ID;

/// Scores of one test bag; index = relation id, the NA entry is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub pair: (usize, usize),
    pub gold: usize,
    pub scores: Vec<f64>,
}

impl PredictionRecord {
    /// `head<TAB>tail<TAB>gold_id<TAB>score,score,...`
    pub fn to_tsv(records: &[PredictionRecord]) -> String {
        let mut out = String::new();
        for r in records {
            let scores: Vec<String> = r.scores.iter().map(|s| format!("{s:.9}")).collect();
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.pair.0, r.pair.1, r.gold, scores.join(","));
        }
        out
    }

    pub fn parse_tsv(text: &str, source_name: &str) -> Result<Vec<PredictionRecord>> {
        let mut out = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::format(source_name, k + 1, msg.to_string());
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err("expected `head<TAB>tail<TAB>gold<TAB>scores`"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| err("expected a non-negative integer"));
            let scores = fields[3]
                .split(',')
                .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| err("scores must be finite numbers"))?;
            let gold = int(fields[2])?;
            if gold >= scores.len() {
                return Err(err("gold relation id outside the score vector"));
            }
            if out.first().is_some_and(|r: &PredictionRecord| r.scores.len() != scores.len()) {
                return Err(err("score vectors differ in length"));
            }
            out.push(PredictionRecord {
                pair: (int(fields[0])?, int(fields[1])?),
                gold,
                scores,
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Vec<PredictionRecord>> {
        Self::parse_tsv(&read_to_string(path)?, &path.display().to_string())
    }
}

/// One (pair, relation) candidate fact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub pair: (usize, usize),
    pub relation: usize,
    pub score: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub precision: f64,
    pub recall: f64,
}

/// All non-NA candidate facts, best score first; ties by pair, then relation.
pub fn ranked_candidates(records: &[PredictionRecord]) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = records
        .iter()
        .flat_map(|rec| {
            rec.scores.iter().enumerate().filter(|&(r, _)| r != NA_ID).map(move |(r, &score)| Candidate {
                pair: rec.pair,
                relation: r,
                score,
                correct: rec.gold != NA_ID && rec.gold == r,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.pair.cmp(&b.pair))
            .then(a.relation.cmp(&b.relation))
    });
    out
}

fn gold_facts(records: &[PredictionRecord]) -> usize {
    records.iter().filter(|r| r.gold != NA_ID).count()
}

/// One point per rank cut-off.
pub fn pr_curve(records: &[PredictionRecord]) -> Result<Vec<CurvePoint>> {
    let total = gold_facts(records);
    if total == 0 {
        return Err(Error::NoGoldFacts);
    }
    let mut correct = 0usize;
    Ok(ranked_candidates(records)
        .iter()
        .enumerate()
        .map(|(k, c)| {
            correct += c.correct as usize;
            CurvePoint {
                precision: correct as f64 / (k + 1) as f64,
                recall: correct as f64 / total as f64,
            }
        })
        .collect())
}

/// Trapezoidal area under precision over recall, starting from `(p_first, 0)`.
pub fn auc(curve: &[CurvePoint]) -> f64 {
    let Some(first) = curve.first() else { return 0.0 };
    let mut prev = CurvePoint { precision: first.precision, recall: 0.0 };
    let mut area = 0.0;
    for p in curve {
        area += (p.recall - prev.recall) * (p.precision + prev.precision) / 2.0;
        prev = *p;
    }
    area
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `(precision, recall, f1)` maximizing F1; ties go to the higher recall.
pub fn max_f1_point(curve: &[CurvePoint]) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, 0.0);
    for p in curve {
        let f = f1(p.precision, p.recall);
        if f > best.2 || (f == best.2 && p.recall > best.1) {
            best = (p.precision, p.recall, f);
        }
    }
    best
}

/// Precision among the `n` best candidate facts.
pub fn precision_at_n(records: &[PredictionRecord], n: usize) -> Result<f64> {
    let ranked = ranked_candidates(records);
    if n == 0 || n > ranked.len() {
        return Err(Error::InvalidArgument(format!("P@{n} needs 1..={} candidates", ranked.len())));
    }
    Ok(ranked[..n].iter().filter(|c| c.correct).count() as f64 / n as f64)
}

/// Zero-based rank of `gold` among non-NA relations, best score first, ties by id.
fn gold_rank(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    scores
        .iter()
        .enumerate()
        .filter(|&(r, &s)| r != NA_ID && r != gold && (s > g || (s == g && r < gold)))
        .count()
}

/// Macro Hits@K over relations with fewer than `cutoff` training instances.
pub fn hits_at_k(records: &[PredictionRecord], training_counts: &[usize], cutoff: usize, k: usize) -> Result<f64> {
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be positive".into()));
    }
    let m = training_counts.len();
    let mut hits = vec![0usize; m];
    let mut bags = vec![0usize; m];
    for rec in records {
        let g = rec.gold;
        if g == NA_ID || g >= m || training_counts[g] >= cutoff {
            continue;
        }
        bags[g] += 1;
        hits[g] += (gold_rank(&rec.scores, g) < k) as usize;
    }
    let rates: Vec<f64> = (0..m).filter(|&r| bags[r] > 0).map(|r| hits[r] as f64 / bags[r] as f64).collect();
    if rates.is_empty() {
        return Err(Error::NoLongTailRelations);
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_records: usize,
    pub n_candidates: usize,
    pub n_gold: usize,
    pub auc: f64,
    pub max_f1: (f64, f64, f64),
    pub p_at: Vec<(usize, f64)>,
    /// `(k, cutoff, value)`.
    pub hits_at: Vec<(usize, usize, f64)>,
    pub curve: Vec<CurvePoint>,
}

/// Requested P@N and Hits@K entries are skipped when undefined for the data.
pub fn evaluate(
    records: &[PredictionRecord],
    training_counts: Option<&[usize]>,
    p_at: &[usize],
    hits: &[(usize, usize)],
) -> Result<EvalReport> {
    let curve = pr_curve(records)?;
    let n_candidates = curve.len();
    let p_at = p_at
        .iter()
        .filter(|&&n| n >= 1 && n <= n_candidates)
        .map(|&n| precision_at_n(records, n).map(|p| (n, p)))
        .collect::<Result<Vec<_>>>()?;
    let mut hits_at = Vec::new();
    if let Some(counts) = training_counts {
        for &(k, cutoff) in hits {
            match hits_at_k(records, counts, cutoff, k) {
                Ok(v) => hits_at.push((k, cutoff, v)),
                Err(Error::NoLongTailRelations) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(EvalReport {
        n_records: records.len(),
        n_candidates,
        n_gold: gold_facts(records),
        auc: auc(&curve),
        max_f1: max_f1_point(&curve),
        p_at,
        hits_at,
        curve,
    })
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records={}", self.n_records);
        let _ = writeln!(out, "candidates={}", self.n_candidates);
        let _ = writeln!(out, "gold_facts={}", self.n_gold);
        let _ = writeln!(out, "auc={:.6}", self.auc);
        let _ = writeln!(out, "max_f1.precision={:.6}", self.max_f1.0);
        let _ = writeln!(out, "max_f1.recall={:.6}", self.max_f1.1);
        let _ = writeln!(out, "max_f1.f1={:.6}", self.max_f1.2);
        for (n, p) in &self.p_at {
            let _ = writeln!(out, "p_at.{n}={p:.6}");
        }
        for (k, cutoff, v) in &self.hits_at {
            let _ = writeln!(out, "hits_at.{k}.below_{cutoff}={v:.6}");
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for p in &self.curve {
            let _ = writeln!(out, "{:.9},{:.9}", p.recall, p.precision);
        }
        out
    }

    /// Standalone 800x600 line plot, both axes spanning 0..1.
    pub fn curve_svg(&self) -> String {
        let (w, h, pad) = (800.0, 600.0, 60.0);
        let x = |r: f64| pad + r * (w - 2.0 * pad);
        let y = |p: f64| h - pad - p * (h - 2.0 * pad);
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600">"#);
        let _ = writeln!(out, r#"<rect width="800" height="600" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<path d="M{:.1} {:.1} L{:.1} {:.1} L{:.1} {:.1}" fill="none" stroke="black"/>"#,
            x(0.0),
            y(1.0),
            x(0.0),
            y(0.0),
            x(1.0),
            y(0.0)
        );
        for t in 0..=10 {
            let v = t as f64 / 10.0;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{v:.1}</text>"#, x(v), y(0.0) + 18.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">{v:.1}</text>"#, x(0.0) - 6.0, y(v) + 4.0);
        }
        let _ = writeln!(out, r#"<text x="400" y="590" font-size="14" text-anchor="middle">recall</text>"#);
        let _ = writeln!(
            out,
            r#"<text x="16" y="300" font-size="14" text-anchor="middle" transform="rotate(-90 16 300)">precision</text>"#
        );
        let points: Vec<String> = self.curve.iter().map(|p| format!("{:.2},{:.2}", x(p.recall), y(p.precision))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, points.join(" "));
        let _ = writeln!(out, r#"<text x="700" y="40" font-size="14" text-anchor="end">AUC {:.4}</text>"#, self.auc);
        out.push_str("</svg>\n");
        out
    }

    pub fn save(&self, report: &Path, csv: Option<&Path>, svg: Option<&Path>) -> Result<()> {
        write_string(report, &self.to_text())?;
        if let Some(p) = csv {
            write_string(p, &self.curve_csv())?;
        }
        if let Some(p) = svg {
            write_string(p, &self.curve_svg())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// One non-NA relation; record k gets score `scores[k]` and is correct when `gold[k]`.
    fn binary_records(scores: &[f64], correct: &[bool]) -> Vec<PredictionRecord> {
        scores
            .iter()
            .zip(correct)
            .enumerate()
            .map(|(k, (&s, &c))| PredictionRecord {
                pair: (k, k + 1),
                gold: if c { 1 } else { NA_ID },
                scores: vec![0.0, s],
            })
            .collect()
    }

    #[test]
    fn hand_sweep() {
        let recs = binary_records(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        let curve = pr_curve(&recs).unwrap();
        let expect = [(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0), (0.5, 1.0)];
        for (p, (ep, er)) in curve.iter().zip(expect) {
            assert!((p.precision - ep).abs() < 1e-12 && (p.recall - er).abs() < 1e-12);
        }
        // (1,0)->(1,.5) contributes .5; (.5,.5)->(2/3,1) contributes .5 * (.5 + 2/3) / 2
        assert!((auc(&curve) - (0.5 + 0.25 * (0.5 + 2.0 / 3.0))).abs() < 1e-12);
        assert!((auc(&curve) - 0.791667).abs() < 1e-6);
        let (p, r, f) = max_f1_point(&curve);
        assert!((p - 2.0 / 3.0).abs() < 1e-12 && r == 1.0 && (f - 0.8).abs() < 1e-12);
        assert_eq!(precision_at_n(&recs, 2).unwrap(), 0.5);
        assert_eq!(precision_at_n(&recs, 4).unwrap(), 0.5);
        assert!(precision_at_n(&recs, 5).is_err());
    }

    #[test]
    fn perfect_and_reversed_rankings() {
        let recs = binary_records(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]);
        let curve = pr_curve(&recs).unwrap();
        assert!(curve.iter().take_while(|p| p.recall < 1.0).all(|p| p.precision == 1.0));
        assert_eq!(auc(&curve), 1.0);
        assert_eq!(max_f1_point(&curve), (1.0, 1.0, 1.0));
        let reversed = binary_records(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]);
        assert_eq!(pr_curve(&reversed).unwrap().last().unwrap().precision, 0.5);
        assert!(matches!(pr_curve(&binary_records(&[0.5], &[false])), Err(Error::NoGoldFacts)));
    }

    #[test]
    fn hits_examples() {
        let rec = |gold: usize, scores: Vec<f64>| PredictionRecord { pair: (0, 1), gold, scores };
        let recs = vec![rec(2, vec![0.9, 0.02, 0.05, 0.03]), rec(2, vec![0.1, 0.5, 0.1, 0.3]), rec(1, vec![0.0, 0.2, 0.5, 0.3])];
        let counts = [500, 300, 5, 400];
        assert_eq!(hits_at_k(&recs, &counts, 10, 1).unwrap(), 0.5);
        assert_eq!(hits_at_k(&recs, &counts, 1000, 3).unwrap(), 1.0);
        assert!(matches!(hits_at_k(&recs, &counts, 2, 1), Err(Error::NoLongTailRelations)));
        assert_eq!(hits_at_k(&recs, &counts, 1000, 1).unwrap(), 0.25);
    }

    #[test]
    fn report_formats() {
        let recs = binary_records(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        let report = evaluate(&recs, Some(&[0, 3]), &[2, 100], &[(1, 10)]).unwrap();
        let text = report.to_text();
        assert!(text.contains("auc=0.791667\n"));
        assert!(text.contains("p_at.2=0.500000\n") && !text.contains("p_at.100"));
        assert!(text.contains("hits_at.1.below_10=1.000000\n"));
        assert!(report.curve_csv().starts_with("recall,precision\n0.500000000,1.000000000\n"));
        assert!(report.curve_svg().contains(r#"viewBox="0 0 800 600""#));
        let tsv = PredictionRecord::to_tsv(&recs);
        assert_eq!(PredictionRecord::parse_tsv(&tsv, "p").unwrap(), recs);
        assert!(PredictionRecord::parse_tsv("1\t2\t5\t0.1,0.2\n", "p").is_err());
    }

    fn records_strategy() -> impl Strategy<Value = Vec<PredictionRecord>> {
        prop::collection::vec((0usize..4, prop::collection::vec(0u32..20, 4)), 1..60).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(k, (gold, s))| PredictionRecord {
                    pair: (k % 7, k),
                    gold,
                    scores: s.into_iter().map(|v| v as f64 / 20.0).collect(),
                })
                .collect()
        })
    }

    /// Quadratic oracle: rank by counting strictly better candidates.
    fn oracle_curve(records: &[PredictionRecord]) -> Vec<(f64, f64)> {
        let mut facts = Vec::new();
        for r in records {
            for rel in 1..r.scores.len() {
                facts.push((r.scores[rel], r.pair, rel, r.gold == rel));
            }
        }
        let better = |a: &(f64, (usize, usize), usize, bool), b: &(f64, (usize, usize), usize, bool)| {
            a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
        };
        let mut ranked = vec![None; facts.len()];
        for f in &facts {
            let rank = facts.iter().filter(|g| better(g, f)).count();
            ranked[rank] = Some(f.3);
        }
        let total = records.iter().filter(|r| r.gold != 0).count() as f64;
        let mut c = 0.0;
        ranked
            .into_iter()
            .enumerate()
            .map(|(k, ok)| {
                c += ok.unwrap() as u8 as f64;
                (c / (k + 1) as f64, c / total)
            })
            .collect()
    }

    fn oracle_hits(records: &[PredictionRecord], counts: &[usize], cutoff: usize, k: usize) -> Option<f64> {
        let mut rates = Vec::new();
        for rel in 1..counts.len() {
            if counts[rel] >= cutoff {
                continue;
            }
            let bags: Vec<&PredictionRecord> = records.iter().filter(|r| r.gold == rel).collect();
            if bags.is_empty() {
                continue;
            }
            let hit = bags
                .iter()
                .filter(|r| {
                    let mut order: Vec<usize> = (1..r.scores.len()).collect();
                    order.sort_by(|&a, &b| r.scores[b].partial_cmp(&r.scores[a]).unwrap().then(a.cmp(&b)));
                    order[..k.min(order.len())].contains(&rel)
                })
                .count();
            rates.push(hit as f64 / bags.len() as f64);
        }
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    proptest! {
        #[test]
        fn curve_matches_oracle(recs in records_strategy()) {
            prop_assume!(recs.iter().any(|r| r.gold != 0));
            let curve = pr_curve(&recs).unwrap();
            let oracle = oracle_curve(&recs);
            prop_assert_eq!(curve.len(), oracle.len());
            for (p, (op, or)) in curve.iter().zip(&oracle) {
                prop_assert!((p.precision - op).abs() < 1e-12 && (p.recall - or).abs() < 1e-12);
            }
            let a = auc(&curve);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
            let (p, r, f) = max_f1_point(&curve);
            prop_assert!(f <= 1.0_f64.min(2.0 * p.min(r)) + 1e-12);
            let brute = oracle.iter().map(|&(p, r)| f1(p, r)).fold(0.0, f64::max);
            prop_assert!((f - brute).abs() < 1e-12);
            for n in 1..=curve.len() {
                let correct = oracle[n - 1].0 * n as f64;
                prop_assert!((precision_at_n(&recs, n).unwrap() - correct / n as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_is_invariant_under_monotone_transforms(recs in records_strategy()) {
            prop_assume!(recs.iter().any(|r| r.gold != 0));
            let mapped: Vec<PredictionRecord> = recs
                .iter()
                .map(|r| PredictionRecord { scores: r.scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect(), ..r.clone() })
                .collect();
            prop_assert_eq!(auc(&pr_curve(&recs).unwrap()), auc(&pr_curve(&mapped).unwrap()));
        }

        #[test]
        fn hits_matches_oracle(recs in records_strategy(), counts in prop::collection::vec(0usize..40, 4), cutoff in 1usize..40, k in 1usize..4) {
            match (hits_at_k(&recs, &counts, cutoff, k), oracle_hits(&recs, &counts, cutoff, k)) {
                (Ok(v), Some(o)) => prop_assert!((v - o).abs() < 1e-12),
                (Err(Error::NoLongTailRelations), None) => {}
                (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
            }
            if let Ok(v) = hits_at_k(&recs, &counts, cutoff, 3) {
                prop_assert_eq!(v, 1.0);
            }
        }

        #[test]
        fn precision_at_n_non_increasing_for_perfect_rankings(n_pos in 1usize..30, n_neg in 0usize..30) {
            let total = n_pos + n_neg;
            let scores: Vec<f64> = (0..total).map(|k| (total - k) as f64).collect();
            let correct: Vec<bool> = (0..total).map(|k| k < n_pos).collect();
            let recs = binary_records(&scores, &correct);
            let ps: Vec<f64> = (1..=total).map(|n| precision_at_n(&recs, n).unwrap()).collect();
            prop_assert!(ps.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
