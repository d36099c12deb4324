use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pool::Direction;

/// One table row. `drop_rate` and `fr_at_1` are absent on base rows (and
/// the drop rate also when the base R@1 is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub variant: String,
    pub direction: Direction,
    /// A seed, `-` for base rows, or `mean` for seed-averaged rows.
    pub seed: String,
    pub r_at_1: f64,
    pub drop_rate: Option<f64>,
    pub fr_at_1: Option<f64>,
}

impl ReportRow {
    pub fn is_base(&self) -> bool {
        self.seed == "-"
    }

    pub fn is_mean(&self) -> bool {
        self.seed == "mean"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl EvalReport {
    /// Base R@1 of `model` in `direction`.
    pub fn base_r1(&self, model: &str, direction: Direction) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.is_base() && r.model == model && r.direction == direction)
            .map(|r| r.r_at_1)
    }

    fn cells(&self) -> Vec<[String; 6]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.model.clone(),
                    r.variant.clone(),
                    r.seed.clone(),
                    format!("{:.2}", r.r_at_1),
                    opt(r.drop_rate),
                    opt(r.fr_at_1),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,variant,seed,r_at_1,drop_rate,fr_at_1\n");
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | Variant | Seed | R@1 | Drop rate | FR@1 |\n");
        out.push_str("|---|---|---|---:|---:|---:|\n");
        for row in self.cells() {
            writeln!(out, "| {} |", row.join(" | ")).unwrap();
        }
        out
    }

    /// Fixed-width plain-text table.
    pub fn to_text(&self) -> String {
        let header = ["model", "variant", "seed", "R@1", "drop", "FR@1"].map(String::from);
        let cells = self.cells();
        let mut widths = header.clone().map(|h| h.len());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&cells) {
            let mut line = String::new();
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                if i < 3 {
                    write!(line, "{c:<w$}").unwrap();
                } else {
                    write!(line, "{c:>w$}").unwrap();
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}
