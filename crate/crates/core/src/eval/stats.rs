use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};
use crate::io::read_lines;

/// Algorithms × problems, higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub algorithms: Vec<String>,
    pub problems: Vec<String>,
    /// `scores[i][j]`: algorithm i on problem j.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(algorithms: Vec<String>, problems: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if algorithms.len() < 2 || problems.len() < 2 {
            return Err(Error::Invalid("score matrix needs at least 2 algorithms and 2 problems".into()));
        }
        if scores.len() != algorithms.len() {
            return Err(Error::Dimension { expected: algorithms.len(), got: scores.len(), context: "score rows" });
        }
        for row in &scores {
            if row.len() != problems.len() {
                return Err(Error::Dimension { expected: problems.len(), got: row.len(), context: "score columns" });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("non-finite score".into()));
            }
        }
        Ok(Self { algorithms, problems, scores })
    }

    /// Header row `name<sep>problem…` then one row per algorithm. Tabs,
    /// commas or runs of whitespace separate fields.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let split = |l: &str| -> Vec<String> {
            let sep: &[char] = if l.contains('\t') {
                &['\t']
            } else if l.contains(',') {
                &[',']
            } else {
                &[' ']
            };
            l.split(sep).map(str::trim).filter(|f| !f.is_empty()).map(String::from).collect()
        };
        let Some(&(_, header)) = lines.first() else {
            return Err(Error::Empty(format!("score matrix {}", path.display())));
        };
        let problems: Vec<String> = split(header).into_iter().skip(1).collect();
        let mut algorithms = Vec::new();
        let mut scores = Vec::new();
        for &(no, line) in &lines[1..] {
            let fields = split(line);
            if fields.len() != problems.len() + 1 {
                return Err(Error::parse(
                    path,
                    no,
                    format!("expected {} fields, got {}", problems.len() + 1, fields.len()),
                ));
            }
            let row = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(path, no, format!("bad score {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            algorithms.push(fields[0].clone());
            scores.push(row);
        }
        Self::new(algorithms, problems, scores)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        let text: String = lines.into_iter().map(|(_, l)| l + "\n").collect();
        Self::parse(&text, path)
    }

    pub fn k(&self) -> usize {
        self.algorithms.len()
    }

    pub fn n(&self) -> usize {
        self.problems.len()
    }

    /// Per-problem ranks, 1 = best, averaged over ties.
    pub fn ranks(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        let mut ranks = vec![vec![0.0; self.n()]; k];
        for j in 0..self.n() {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| self.scores[b][j].total_cmp(&self.scores[a][j]));
            let mut i = 0;
            while i < k {
                let mut e = i;
                while e + 1 < k && self.scores[order[e + 1]][j] == self.scores[order[i]][j] {
                    e += 1;
                }
                let avg = (i + e) as f64 / 2.0 + 1.0;
                for &a in &order[i..=e] {
                    ranks[a][j] = avg;
                }
                i = e + 1;
            }
        }
        ranks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub average_ranks: Vec<f64>,
    pub rank_sums: Vec<f64>,
    pub chi2: f64,
    pub chi2_critical: f64,
    pub chi2_p: f64,
    pub iman_davenport: f64,
    pub f_critical: f64,
    pub f_p: f64,
}

/// Friedman χ² and the Iman-Davenport F correction.
pub fn friedman(sm: &ScoreMatrix, alpha: f64) -> Result<FriedmanResult> {
    let (k, n) = (sm.k() as f64, sm.n() as f64);
    let rank_sums: Vec<f64> = sm.ranks().iter().map(|r| r.iter().sum()).collect();
    let average_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n).collect();
    let sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * n / (k * (k + 1.0)) * sq - 3.0 * n * (k + 1.0)).max(0.0);
    let denom = n * (k - 1.0) - chi2;
    if denom <= 0.0 {
        return Err(Error::Invalid("Iman-Davenport statistic undefined: rankings are unanimous".into()));
    }
    let iman_davenport = (n - 1.0) * chi2 / denom;
    let chi = ChiSquared::new(k - 1.0).map_err(|e| Error::Invalid(e.to_string()))?;
    let f = FisherSnedecor::new(k - 1.0, (k - 1.0) * (n - 1.0)).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(FriedmanResult {
        average_ranks,
        rank_sums,
        chi2,
        chi2_critical: chi.inverse_cdf(1.0 - alpha),
        chi2_p: chi.sf(chi2),
        iman_davenport,
        f_critical: f.inverse_cdf(1.0 - alpha),
        f_p: f.sf(iman_davenport),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmRow {
    pub i: usize,
    pub algorithm: String,
    pub z: f64,
    pub p: f64,
    pub threshold: f64,
    pub rejected: bool,
}

/// Holm step-down comparison of every algorithm against `control`.
/// Rows come out in ascending p; ties keep matrix order.
pub fn holm_posthoc(
    algorithms: &[String],
    average_ranks: &[f64],
    control: usize,
    n: usize,
    alpha: f64,
) -> Result<Vec<HolmRow>> {
    let k = algorithms.len();
    if average_ranks.len() != k || control >= k {
        return Err(Error::Invalid("rank vector does not match algorithms".into()));
    }
    let se = standard_error(k, n);
    let normal = Normal::standard();
    let mut rows: Vec<HolmRow> = (0..k)
        .filter(|&i| i != control)
        .map(|i| {
            let z = (average_ranks[i] - average_ranks[control]) / se;
            HolmRow {
                i: 0,
                algorithm: algorithms[i].clone(),
                z,
                p: 2.0 * normal.sf(z.abs()),
                threshold: 0.0,
                rejected: false,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.p.total_cmp(&b.p));
    let mut still_rejecting = true;
    for (idx, row) in rows.iter_mut().enumerate() {
        row.i = idx + 1;
        row.threshold = alpha / (k - row.i) as f64;
        still_rejecting &= row.p <= row.threshold;
        row.rejected = still_rejecting;
    }
    Ok(rows)
}

/// `√(k(k+1)/(6N))`.
pub fn standard_error(k: usize, n: usize) -> f64 {
    let k = k as f64;
    (k * (k + 1.0) / (6.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub alpha: f64,
    pub algorithms: Vec<String>,
    pub control: String,
    pub friedman: FriedmanResult,
    pub holm: Vec<HolmRow>,
}

impl StatReport {
    /// Friedman plus Holm with the best-ranked algorithm as control.
    pub fn compute(sm: &ScoreMatrix, alpha: f64) -> Result<Self> {
        let fr = friedman(sm, alpha)?;
        let control = (0..sm.k())
            .min_by(|&a, &b| fr.average_ranks[a].total_cmp(&fr.average_ranks[b]))
            .unwrap_or(0);
        let holm = holm_posthoc(&sm.algorithms, &fr.average_ranks, control, sm.n(), alpha)?;
        Ok(Self { alpha, algorithms: sm.algorithms.clone(), control: sm.algorithms[control].clone(), friedman: fr, holm })
    }

    pub fn to_text(&self) -> String {
        let f = &self.friedman;
        let mut s = String::new();
        s.push_str("algorithm\taverage_rank\n");
        for (a, r) in self.algorithms.iter().zip(&f.average_ranks) {
            s.push_str(&format!("{a}\t{r:.4}\n"));
        }
        s.push_str(&format!(
            "\nfriedman\t{:.7}\tcritical\t{:.7}\tp\t{:.3e}\n",
            f.chi2, f.chi2_critical, f.chi2_p
        ));
        s.push_str(&format!(
            "iman_davenport\t{:.7}\tcritical\t{:.7}\tp\t{:.3e}\n",
            f.iman_davenport, f.f_critical, f.f_p
        ));
        s.push_str(&format!("\ncontrol\t{}\ni\talgorithm\tz\tp\tholm\trejected\n", self.control));
        for r in &self.holm {
            s.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                r.i, r.algorithm, r.z, r.p, r.threshold, r.rejected
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize, p: &str) -> Vec<String> {
        (0..n).map(|i| format!("{p}{i}")).collect()
    }

    #[test]
    fn identical_scores_tie() {
        let sm = ScoreMatrix::new(names(3, "a"), names(2, "p"), vec![vec![0.5, 0.5]; 3]).unwrap();
        assert!(sm.ranks().iter().flatten().all(|&r| r == 2.0));
        let err = friedman(&sm, 0.05);
        assert!(err.is_ok());
        assert_eq!(err.unwrap().chi2, 0.0);
    }

    #[test]
    fn se_value() {
        assert!((standard_error(8, 6) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parse_errors() {
        let p = Path::new("m.tsv");
        assert!(ScoreMatrix::parse("x\ta\tb\nA\t1\t2\nB\t1\n", p).is_err());
        assert!(ScoreMatrix::parse("x\ta\tb\nA\t1\t2\n", p).is_err());
        assert!(ScoreMatrix::parse("x,a,b\nA,1,2\nB,2,oops\n", p).is_err());
        let ok = ScoreMatrix::parse("x,a,b\nA,1,2\nB,2,1\n", p).unwrap();
        assert_eq!(ok.scores[1], vec![2.0, 1.0]);
    }
}
