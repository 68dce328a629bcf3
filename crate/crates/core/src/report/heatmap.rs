use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReportError, Result};

const CELL: f64 = 36.0;
const BAR_WIDTH: f64 = 14.0;

/// Score matrix with labels. `NaN` cells are drawn empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub title: Option<String>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    /// Columns drawn in bold (ground-truth characters).
    pub bold_cols: Vec<usize>,
}

impl HeatmapSpec {
    fn validate(&self) -> Result<()> {
        if self.scores.is_empty() || self.scores[0].is_empty() {
            return Err(ReportError::EmptyHeatmap);
        }
        if self.scores.len() != self.row_labels.len() || self.scores.iter().any(|r| r.len() != self.col_labels.len()) {
            return Err(ReportError::Heatmap(format!(
                "{} row labels and {} column labels for a {}x{} matrix",
                self.row_labels.len(),
                self.col_labels.len(),
                self.scores.len(),
                self.scores[0].len()
            )));
        }
        if let Some(&c) = self.bold_cols.iter().find(|&&c| c >= self.col_labels.len()) {
            return Err(ReportError::Heatmap(format!("bold column {c} out of range")));
        }
        Ok(())
    }

    /// Largest finite absolute score; the color scale spans ±this value.
    pub fn range(&self) -> f64 {
        self.scores
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Blue for negative, white at zero, red for positive, linear in `v / max`.
pub fn diverging_color(v: f64, max: f64) -> (u8, u8, u8) {
    if !v.is_finite() {
        return (238, 238, 238);
    }
    let t = if max > 0.0 { (v / max).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(t), fade(t), 255)
    }
}

/// Tick label: one decimal for magnitudes ≥ 1, two significant digits below.
pub fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    let decimals = if a >= 1.0 {
        1
    } else {
        (1 - a.log10().floor() as i32).max(1) as usize
    };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(spec: &HeatmapSpec) -> Result<String> {
    spec.validate()?;
    let rows = spec.scores.len();
    let cols = spec.col_labels.len();
    let max = spec.range();
    let label_w = spec.row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64 * 8.0 + 12.0;
    let top = if spec.title.is_some() { 30.0 } else { 10.0 };
    let grid_w = cols as f64 * CELL;
    let grid_h = rows as f64 * CELL;
    let bar_x = label_w + grid_w + 20.0;
    let width = bar_x + BAR_WIDTH + 50.0;
    let height = top + grid_h + 34.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="14">"#
    );
    s.push_str(
        "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\">\
<stop offset=\"0\" stop-color=\"rgb(255,0,0)\"/>\
<stop offset=\"0.5\" stop-color=\"rgb(255,255,255)\"/>\
<stop offset=\"1\" stop-color=\"rgb(0,0,255)\"/>\
</linearGradient></defs>\n",
    );
    if let Some(t) = &spec.title {
        let _ = writeln!(s, r#"<text x="{label_w}" y="20">{}</text>"#, escape(t));
    }
    for (r, row) in spec.scores.iter().enumerate() {
        let y = top + r as f64 * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + CELL / 2.0 + 5.0,
            escape(&spec.row_labels[r])
        );
        for (c, &v) in row.iter().enumerate() {
            let (red, green, blue) = diverging_color(v, max);
            let title = if v.is_finite() { format!("{v:.6}") } else { "n/a".into() };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({red},{green},{blue})" stroke="rgb(200,200,200)"><title>{title}</title></rect>"#,
                label_w + c as f64 * CELL
            );
        }
    }
    for (c, l) in spec.col_labels.iter().enumerate() {
        let weight = if spec.bold_cols.contains(&c) {
            r#" font-weight="bold""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle"{weight}>{}</text>"#,
            label_w + (c as f64 + 0.5) * CELL,
            top + grid_h + 20.0,
            escape(l)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{bar_x}" y="{top}" width="{BAR_WIDTH}" height="{grid_h}" fill="url(#scale)" stroke="rgb(120,120,120)"/>"#
    );
    for (frac, v) in [(0.0, max), (0.5, 0.0), (1.0, -max)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11">{}</text>"#,
            bar_x + BAR_WIDTH + 4.0,
            top + frac * grid_h + 4.0,
            format_tick(v)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Tab-separated matrix with a header of column labels.
pub fn render_text(spec: &HeatmapSpec) -> Result<String> {
    spec.validate()?;
    let mut s = String::new();
    for (c, l) in spec.col_labels.iter().enumerate() {
        s.push('\t');
        s.push_str(l);
        if spec.bold_cols.contains(&c) {
            s.push('*');
        }
    }
    s.push('\n');
    for (label, row) in spec.row_labels.iter().zip(&spec.scores) {
        s.push_str(label);
        for v in row {
            if v.is_finite() {
                let _ = write!(s, "\t{v:.6}");
            } else {
                s.push_str("\tNA");
            }
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes `path` (SVG) and the text matrix next to it with a `.txt`
/// extension; returns the sidecar path.
pub fn emit_heatmap(spec: &HeatmapSpec, path: &Path) -> Result<PathBuf> {
    let svg = render_svg(spec)?;
    let text = render_text(spec)?;
    std::fs::write(path, svg)?;
    let sidecar = path.with_extension("txt");
    std::fs::write(&sidecar, text)?;
    Ok(sidecar)
}

/// Square matrix over character positions; cell `(i, j)`, `i ≠ j`, holds the
/// score of the pair `{i, j}` and the diagonal is left empty.
pub fn bigram_spec(chars: &[String], pair_score: impl Fn(usize, usize) -> f64, bold: Vec<usize>) -> HeatmapSpec {
    let n = chars.len();
    let scores = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        f64::NAN
                    } else {
                        pair_score(i.min(j), i.max(j))
                    }
                })
                .collect()
        })
        .collect();
    HeatmapSpec {
        title: None,
        row_labels: chars.to_vec(),
        col_labels: chars.to_vec(),
        scores,
        bold_cols: bold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scores: Vec<Vec<f64>>) -> HeatmapSpec {
        HeatmapSpec {
            title: Some("t".into()),
            row_labels: (0..scores.len()).map(|r| format!("r{r}")).collect(),
            col_labels: (0..scores[0].len()).map(|c| format!("c{c}")).collect(),
            scores,
            bold_cols: vec![],
        }
    }

    #[test]
    fn single_zero_cell_is_white() {
        let svg = render_svg(&spec(vec![vec![0.0]])).unwrap();
        assert!(svg.contains("fill=\"rgb(255,255,255)\""));
    }

    #[test]
    fn colors_and_ticks() {
        assert_eq!(diverging_color(2.3, 2.3), (255, 0, 0));
        assert_eq!(diverging_color(-2.3, 2.3), (0, 0, 255));
        assert_eq!(diverging_color(1.15, 2.3), (255, 128, 128));
        let svg = render_svg(&spec(vec![vec![-2.3, 0.4, 2.3]])).unwrap();
        assert!(svg.contains(">2.3</text>"));
        assert!(svg.contains(">-2.3</text>"));
        assert_eq!(format_tick(0.0437), "0.044");
        assert_eq!(format_tick(0.5), "0.50");
    }

    #[test]
    fn deterministic_and_bold() {
        let mut s = spec(vec![vec![1.0, -0.5], vec![0.25, 0.0]]);
        s.bold_cols = vec![1];
        assert_eq!(render_svg(&s).unwrap(), render_svg(&s).unwrap());
        assert!(render_svg(&s).unwrap().contains("font-weight=\"bold\">c1<"));
        assert!(render_text(&s).unwrap().starts_with("\tc0\tc1*\n"));
    }

    #[test]
    fn empty_and_mismatched_rejected() {
        let mut s = spec(vec![vec![1.0]]);
        s.scores = vec![];
        assert!(matches!(render_svg(&s), Err(ReportError::EmptyHeatmap)));
        let mut s = spec(vec![vec![1.0, 2.0]]);
        s.col_labels.pop();
        assert!(render_svg(&s).is_err());
    }

    #[test]
    fn bigram_square() {
        let chars: Vec<String> = "abc".chars().map(String::from).collect();
        let s = bigram_spec(&chars, |i, j| (10 * i + j) as f64, vec![2]);
        assert_eq!(s.scores.len(), 3);
        assert!(s.scores[1][1].is_nan());
        assert_eq!(s.scores[2][0], 2.0);
        assert_eq!(s.scores[0][2], 2.0);
        assert!(render_text(&s).unwrap().contains("\tNA"));
    }

    #[test]
    fn labels_escaped() {
        let mut s = spec(vec![vec![1.0]]);
        s.col_labels = vec!["<".into()];
        assert!(render_svg(&s).unwrap().contains(">&lt;<"));
    }
}
