use serde::{Deserialize, Serialize};

use crate::attributes::{ATTRIBUTE_NAMES, NUM_ATTRIBUTES};
use crate::error::{contract, Result};

/// Published full-scale figures, shown next to measured rows for context.
pub const REFERENCE_MEAN_ACCURACY: f64 = 0.8915;
pub const REFERENCE_PSNR: f64 = 32.53;
pub const REFERENCE_SSIM: f64 = 0.962;
pub const REFERENCE_CLASSIFIER_ACCURACY: f64 = 0.9479;

/// One row of an evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub checkpoint: String,
    pub split: String,
    pub images: usize,
    pub accuracy: Option<Vec<f64>>,
    pub mean_accuracy: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

impl EvalReport {
    pub fn new(variant: impl Into<String>, checkpoint: impl Into<String>, split: impl Into<String>, images: usize) -> Self {
        Self {
            variant: variant.into(),
            checkpoint: checkpoint.into(),
            split: split.into(),
            images,
            accuracy: None,
            mean_accuracy: None,
            psnr: None,
            ssim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(acc) = &self.accuracy {
            if acc.len() != NUM_ATTRIBUTES || acc.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(contract!("accuracy must hold {NUM_ATTRIBUTES} values in [0, 1]"));
            }
        }
        if self.mean_accuracy.is_some_and(|m| !(0.0..=1.0).contains(&m)) {
            return Err(contract!("mean accuracy outside [0, 1]"));
        }
        if self.ssim.is_some_and(|s| !(-1.0..=1.0).contains(&s)) {
            return Err(contract!("SSIM outside [-1, 1]"));
        }
        if self.psnr.is_some_and(|p| !(p >= 0.0)) {
            return Err(contract!("PSNR must be non-negative"));
        }
        Ok(())
    }
}

/// Published full-scale rows (mean accuracy, PSNR, SSIM where known).
pub fn reference_rows() -> Vec<EvalReport> {
    let row = |name: &str, acc: f64, psnr: Option<f64>, ssim: Option<f64>| EvalReport {
        mean_accuracy: Some(acc),
        psnr,
        ssim,
        ..EvalReport::new(name, "published", "test", 0)
    };
    vec![
        row("MU-GAN (published)", REFERENCE_MEAN_ACCURACY, Some(REFERENCE_PSNR), Some(REFERENCE_SSIM)),
        row("AttGAN (published)", 0.8391, None, None),
        row("STGAN (published)", 0.8489, None, None),
    ]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedReport {
    /// Tab-separated, one header line plus one line per report.
    pub tsv: String,
    /// Aligned plain-text table.
    pub table: String,
}

fn fmt_opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".into())
}

/// Render reports in input order. Identical inputs give identical bytes.
pub fn render_report(reports: &[EvalReport]) -> Result<RenderedReport> {
    if reports.is_empty() {
        return Err(contract!("nothing to render"));
    }
    for r in reports {
        r.validate()?;
    }
    let mut header: Vec<String> = ["variant", "checkpoint", "split", "images"].map(String::from).to_vec();
    header.extend(ATTRIBUTE_NAMES.iter().map(|s| s.to_string()));
    header.extend(["mean_accuracy", "psnr", "ssim"].map(String::from));

    let mut tsv = header.join("\t");
    tsv.push('\n');
    let mut table_rows = Vec::with_capacity(reports.len());
    for r in reports {
        let acc = |k: usize| r.accuracy.as_ref().map(|a| a[k]);
        let mut raw = vec![r.variant.clone(), r.checkpoint.clone(), r.split.clone(), r.images.to_string()];
        let mut pretty = raw.clone();
        for k in 0..NUM_ATTRIBUTES {
            raw.push(fmt_opt(acc(k), |v| format!("{v:.6}")));
            pretty.push(fmt_opt(acc(k), |v| format!("{:.2}", v * 100.0)));
        }
        raw.push(fmt_opt(r.mean_accuracy, |v| format!("{v:.6}")));
        raw.push(fmt_opt(r.psnr, |v| format!("{v:.4}")));
        raw.push(fmt_opt(r.ssim, |v| format!("{v:.6}")));
        pretty.push(fmt_opt(r.mean_accuracy, |v| format!("{:.2}", v * 100.0)));
        pretty.push(fmt_opt(r.psnr, |v| format!("{v:.2}")));
        pretty.push(fmt_opt(r.ssim, |v| format!("{v:.3}")));
        tsv.push_str(&raw.join("\t"));
        tsv.push('\n');
        table_rows.push(pretty);
    }

    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &table_rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut table = line(&header);
    table.push('\n');
    table.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    table.push('\n');
    for row in &table_rows {
        table.push_str(&line(row));
        table.push('\n');
    }
    Ok(RenderedReport { tsv, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        EvalReport {
            accuracy: Some(vec![0.5; NUM_ATTRIBUTES]),
            mean_accuracy: Some(0.5),
            psnr: Some(25.0),
            ssim: Some(0.9),
            ..EvalReport::new("M0", "ckpt", "test", 10)
        }
    }

    #[test]
    fn deterministic_and_parseable() {
        let a = render_report(&[sample(), sample()]).unwrap();
        let b = render_report(&[sample(), sample()]).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.tsv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split('\t').count(), 4 + NUM_ATTRIBUTES + 3);
        assert_eq!(lines[1].split('\t').count(), 4 + NUM_ATTRIBUTES + 3);
    }

    #[test]
    fn empty_and_invalid_rejected() {
        assert!(render_report(&[]).is_err());
        let bad = EvalReport {
            ssim: Some(1.5),
            ..sample()
        };
        assert!(render_report(&[bad]).is_err());
    }

    #[test]
    fn reference_rows_render() {
        let r = render_report(&reference_rows()).unwrap();
        assert!(r.tsv.contains("0.891500"));
        assert!(r.table.contains("32.53"));
    }
}
