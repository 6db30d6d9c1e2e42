//! Pearson's chi-squared test on 2x2 tables.

use serde::{Deserialize, Serialize};

use crate::dist::chi_squared_sf;
use crate::{StatsError, TestResult};

/// Observed counts, `cells[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub cells: [[u64; 2]; 2],
}

impl ContingencyTable {
    pub fn new(cells: [[u64; 2]; 2]) -> Self {
        Self { cells }
    }

    pub fn row_totals(&self) -> [u64; 2] {
        [self.cells[0][0] + self.cells[0][1], self.cells[1][0] + self.cells[1][1]]
    }

    pub fn col_totals(&self) -> [u64; 2] {
        [self.cells[0][0] + self.cells[1][0], self.cells[0][1] + self.cells[1][1]]
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }
}

/// Chi-squared test of independence with one degree of freedom. When
/// `continuity_correction` is set each `|O - E|` is reduced by 0.5 (Yates),
/// floored at zero. The effect size slot carries phi (uncorrected, signed by
/// the diagonal).
pub fn chi_square_2x2(table: &ContingencyTable, continuity_correction: bool) -> Result<TestResult, StatsError> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::DegenerateMargin);
    }
    let n = table.total() as f64;
    let mut stat = 0.0;
    for (r, row_total) in rows.iter().enumerate() {
        for (c, col_total) in cols.iter().enumerate() {
            let expected = *row_total as f64 * *col_total as f64 / n;
            let mut dev = (table.cells[r][c] as f64 - expected).abs();
            if continuity_correction {
                dev = (dev - 0.5).max(0.0);
            }
            stat += dev * dev / expected;
        }
    }
    let [[a, b], [c, d]] = table.cells.map(|row| row.map(|v| v as f64));
    let phi = (a * d - b * c)
        / (rows[0] as f64 * rows[1] as f64 * cols[0] as f64 * cols[1] as f64).sqrt();
    Ok(TestResult {
        statistic: stat,
        df: 1.0,
        p_value: chi_squared_sf(stat, 1.0)?,
        effect_size: Some(phi),
    })
}
