//! Verdict reports in JSON or as a plain-text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::judge::DetectionVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub threshold: f64,
    pub verdicts: Vec<DetectionVerdict>,
}

pub fn report(verdicts: &[DetectionVerdict], threshold: f64, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let doc = VerdictReport {
                threshold,
                verdicts: verdicts.to_vec(),
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("verdicts serialize");
            s.push('\n');
            s
        }
        ReportFormat::Text => text_table(verdicts, threshold),
    }
}

fn fmt_p(p: &Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.3}"),
        None => "-".into(),
    }
}

fn text_table(verdicts: &[DetectionVerdict], threshold: f64) -> String {
    let rows: Vec<[String; 4]> = verdicts
        .iter()
        .map(|v| {
            let device = match &v.name {
                Some(n) => format!("{n} ({})", v.device),
                None => v.device.to_string(),
            };
            let ps = v.p_values.iter().map(fmt_p).collect::<Vec<_>>().join(" ");
            [device, v.word.clone(), ps, v.status.label().to_string()]
        })
        .collect();
    let header = ["DEVICE", "WORD", "P-VALUES", "VERDICT"];
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "threshold {threshold}, {} verdicts", verdicts.len());
    let line = |cells: [&str; 4], out: &mut String| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:<w1$}  {:<w2$}  {}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    };
    line(header, &mut out);
    for r in &rows {
        line([&r[0], &r[1], &r[2], &r[3]], &mut out);
    }
    let reactive: Vec<_> = verdicts.iter().filter(|v| v.reactive).collect();
    if reactive.is_empty() {
        let _ = writeln!(out, "no device reacted");
    } else {
        for v in reactive {
            let who = v.name.clone().unwrap_or_else(|| v.device.to_string());
            let _ = writeln!(out, "{who} streams audio after {:?}", v.word);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_reports_are_valid() {
        let j = report(&[], 0.42, ReportFormat::Json);
        let back: VerdictReport = serde_json::from_str(&j).unwrap();
        assert!(back.verdicts.is_empty());
        let t = report(&[], 0.42, ReportFormat::Text);
        assert!(t.contains("0 verdicts"));
        assert!(t.contains("no device reacted"));
    }
}
