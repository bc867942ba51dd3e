//! Minimal numeric CSV tables with a fixed, locale-independent number format.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Decimal notation with 9 significant digits; integral values below 10¹⁵
/// print without a fractional part.
pub fn format_decimal(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{x:.0}");
    }
    // Take the exponent after rounding to 9 digits, so 9.9999999999 → 10.0000000.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .expect("scientific formatting has an exponent");
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(invalid(format!(
                "row has {} columns, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", format_decimal(*v)).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| invalid("empty CSV"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut table = Self {
            header,
            rows: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|t| {
                    t.parse::<f64>().map_err(|_| crate::Error::Parse {
                        line: i + 2,
                        message: format!("`{t}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(row)?;
        }
        Ok(table)
    }
}
