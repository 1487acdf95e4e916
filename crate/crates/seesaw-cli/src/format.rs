//! Console formatting for the comparison table.

use seesaw_core::engine::RunMode;
use seesaw_core::metrics::{RunReport, TIME_ROW_LABEL, TOKEN_ROW_LABEL};

/// 9064 -> "9,064".
pub fn thousands(value: u64) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// 1225.558 -> "1,225.56".
pub fn seconds(value: f64) -> String {
    let rounded = format!("{value:.2}");
    let (int_part, frac_part) = rounded.split_once('.').unwrap_or((&rounded, "00"));
    let int_value: u64 = int_part.parse().unwrap_or(0);
    format!("{}.{}", thousands(int_value), frac_part)
}

pub fn mode_label(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Seesaw => "See-Saw mechanism",
        RunMode::Standard => "Standard Approach",
    }
}

/// Render the token/time comparison, one column per report.
pub fn comparison_table(reports: &[&RunReport]) -> String {
    let headers: Vec<String> = std::iter::once("Metric".to_owned())
        .chain(reports.iter().map(|r| mode_label(r.mode).to_owned()))
        .collect();
    let token_row: Vec<String> = std::iter::once(TOKEN_ROW_LABEL.to_owned())
        .chain(reports.iter().map(|r| thousands(r.total_tokens)))
        .collect();
    let time_row: Vec<String> = std::iter::once(TIME_ROW_LABEL.to_owned())
        .chain(reports.iter().map(|r| seconds(r.wall_time_s)))
        .collect();

    let rows = [&headers, &token_row, &time_row];
    let widths: Vec<usize> = (0..headers.len())
        .map(|col| rows.iter().map(|row| row[col].len()).max().unwrap_or(0))
        .collect();

    let format_row = |row: &[String]| -> String {
        row.iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_owned()
    };
    let separator: String = widths
        .iter()
        .map(|w| "-".repeat(*w))
        .collect::<Vec<_>>()
        .join("-+-");

    format!(
        "{}\n{}\n{}\n{}\n",
        format_row(&headers),
        separator,
        format_row(&token_row),
        format_row(&time_row)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(9064), "9,064");
        assert_eq!(thousands(1234567), "1,234,567");
    }

    #[test]
    fn seconds_formatting() {
        assert_eq!(seconds(160.09), "160.09");
        assert_eq!(seconds(1225.558), "1,225.56");
        assert_eq!(seconds(0.0), "0.00");
    }
}
