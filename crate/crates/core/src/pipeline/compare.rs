use std::fmt::Write as _;

use serde::Serialize;

use crate::augmentation::HypothesisPair;
use crate::casework::{evaluate_case_with, n_over_2, CaseObservation, CaseOptions, MarkerFluidMap, NOver2Verdict};
use crate::error::{Error, Result};
use crate::metrics::{Direction, Strength, VerbalConclusion};
use crate::system::LrSystem;

/// Cases cross-tabulated by n/2 verdict (rows) and verbal conclusion of the
/// capped LR (columns, from strongest support for H2 to strongest for H1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyTable {
    pub rows: Vec<NOver2Verdict>,
    pub columns: Vec<VerbalConclusion>,
    pub counts: Vec<Vec<usize>>,
}

fn all_conclusions() -> Vec<VerbalConclusion> {
    let ladder = [
        Strength::Weak,
        Strength::Moderate,
        Strength::ModeratelyStrong,
        Strength::Strong,
        Strength::VeryStrong,
        Strength::ExtremelyStrong,
    ];
    let h2 = ladder.iter().rev().map(|&strength| VerbalConclusion {
        direction: Direction::H2,
        strength,
    });
    let none = std::iter::once(VerbalConclusion {
        direction: Direction::Neither,
        strength: Strength::None,
    });
    let h1 = ladder.iter().map(|&strength| VerbalConclusion {
        direction: Direction::H1,
        strength,
    });
    h2.chain(none).chain(h1).collect()
}

impl ContingencyTable {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, verdict: NOver2Verdict, conclusion: VerbalConclusion) -> usize {
        let r = self.rows.iter().position(|v| *v == verdict);
        let c = self.columns.iter().position(|v| *v == conclusion);
        match (r, c) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_over_2");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (v, row) in self.rows.iter().zip(&self.counts) {
            out.push_str(v.label());
            for n in row {
                let _ = write!(out, ",{n}");
            }
            out.push('\n');
        }
        out
    }
}

/// Scores each case with `sys` and with the n/2 rule pooled over the
/// interest set, and counts the pairs of conclusions.
pub fn compare_with_n_over_2(
    sys: &LrSystem,
    cases: &[CaseObservation],
    hp: &HypothesisPair,
    map: &MarkerFluidMap,
    opts: CaseOptions,
) -> Result<ContingencyTable> {
    if cases.is_empty() {
        return Err(Error::Data("no cases to compare".into()));
    }
    let rows = NOver2Verdict::ALL.to_vec();
    let columns = all_conclusions();
    let mut counts = vec![vec![0; columns.len()]; rows.len()];
    let panel = sys.panel();
    for (i, case) in cases.iter().enumerate() {
        let ctx = |e: Error| Error::Data(format!("case {}: {e}", i + 1));
        let report = evaluate_case_with(sys, case, hp, map, opts).map_err(ctx)?;
        let verdict = n_over_2(&case.to_counts(&panel).map_err(ctx)?, hp.interest, map)
            .map_err(ctx)?
            .verdict;
        let r = rows.iter().position(|v| *v == verdict).expect("all verdicts listed");
        let c = columns.iter().position(|v| *v == report.verbal).expect("all conclusions listed");
        counts[r][c] += 1;
    }
    Ok(ContingencyTable { rows, columns, counts })
}
