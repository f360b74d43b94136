//! Results CSV: one row per checked property.

use std::borrow::Cow;
use std::fmt::Write as _;

/// One evaluated property: its text, the value (number or boolean), and the
/// solver effort behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub formula: String,
    pub value: String,
    pub residual: f64,
    pub iterations: u64,
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

/// Renders result rows as CSV with a header line.
pub fn render_results_csv(rows: &[PropertyResult]) -> String {
    let mut out = String::from("formula,value,residual,iterations\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&row.formula),
            csv_field(&row.value),
            row.residual,
            row.iterations
        );
    }
    out
}
