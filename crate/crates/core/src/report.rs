//! Deterministic renderings of run artifacts: importance grids as CSV text
//! and standalone SVG heatmaps, training history as CSV, metric tables, and
//! a Markdown run summary.
//!
//! Every renderer is a pure function of its inputs and emits the same bytes
//! on every call. Scores are written with the shortest decimal form that
//! parses back to the same bits, so CSV round-trips are byte-identical.
//! Tables round to two decimals for reading; the stored artifacts keep full
//! precision.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::math;
use crate::metrics::EvalReport;
use crate::prune::{Comparison, ImportanceGrid, PruneReport};
use crate::train::EpochStats;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ReportError {
    EmptyGrid,
    BadScore {
        layer: usize,
        head: usize,
        value: f64,
    },
    LogScaleNeedsPositive {
        value: f64,
    },
    BadFloor {
        value: f64,
    },
    CsvHeader {
        expected: &'static str,
        found: String,
    },
    CsvParse {
        line: usize,
        detail: String,
    },
}

impl core::fmt::Display for ReportError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReportError::EmptyGrid => write!(f, "cannot render an empty grid"),
            ReportError::BadScore { layer, head, value } => {
                write!(f, "score at layer {layer} head {head} is not finite: {value}")
            }
            ReportError::LogScaleNeedsPositive { value } => write!(
                f,
                "log scale needs every score positive or an explicit floor, found {value}"
            ),
            ReportError::BadFloor { value } => {
                write!(f, "log floor must be finite and positive, got {value}")
            }
            ReportError::CsvHeader { expected, found } => {
                write!(f, "expected header '{expected}', found '{found}'")
            }
            ReportError::CsvParse { line, detail } => {
                write!(f, "line {line}: {detail}")
            }
        }
    }
}

impl core::error::Error for ReportError {}

// ---------------------------------------------------------------------------
// Grid CSV
// ---------------------------------------------------------------------------

pub const GRID_CSV_HEADER: &str = "layer,head,score";

/// Render the grid in layer-major order. `{}` on f64 prints the shortest
/// decimal that parses back to the identical value.
pub fn grid_to_csv(grid: &ImportanceGrid) -> String {
    let mut out = String::from(GRID_CSV_HEADER);
    out.push('\n');
    for (l, row) in grid.scores.iter().enumerate() {
        for (h, v) in row.iter().enumerate() {
            out.push_str(&format!("{l},{h},{v}\n"));
        }
    }
    out
}

/// Parse scores back out of the CSV. Rows must enumerate `(layer, head)` in
/// layer-major order starting at `(0, 0)` with no gaps, so the result is
/// always rectangular.
pub fn grid_scores_from_csv(text: &str) -> Result<Vec<Vec<f64>>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == GRID_CSV_HEADER => {}
        other => {
            return Err(ReportError::CsvHeader {
                expected: GRID_CSV_HEADER,
                found: other.map(|(_, s)| s.to_string()).unwrap_or_default(),
            })
        }
    }
    let mut scores: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |what: &str| {
            fields.next().ok_or(ReportError::CsvParse {
                line: line_no,
                detail: format!("missing {what} column"),
            })
        };
        let layer: usize = next("layer")?.trim().parse().map_err(|_| ReportError::CsvParse {
            line: line_no,
            detail: String::from("layer is not an integer"),
        })?;
        let head: usize = next("head")?.trim().parse().map_err(|_| ReportError::CsvParse {
            line: line_no,
            detail: String::from("head is not an integer"),
        })?;
        let score: f64 = next("score")?.trim().parse().map_err(|_| ReportError::CsvParse {
            line: line_no,
            detail: String::from("score is not a number"),
        })?;
        if fields.next().is_some() {
            return Err(ReportError::CsvParse {
                line: line_no,
                detail: String::from("more than three columns"),
            });
        }
        let expect_new_row = scores
            .last()
            .map_or(true, |row| !row.is_empty() && row.len() == scores[0].len());
        if layer == scores.len() && head == 0 && expect_new_row {
            scores.push(Vec::new());
        } else if layer + 1 != scores.len() || head != scores.last().map_or(0, Vec::len) {
            return Err(ReportError::CsvParse {
                line: line_no,
                detail: format!("cell ({layer}, {head}) is out of order"),
            });
        }
        scores.last_mut().expect("row exists").push(score);
    }
    if scores.is_empty() {
        return Err(ReportError::EmptyGrid);
    }
    let width = scores[0].len();
    if let Some((l, row)) = scores.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(ReportError::CsvParse {
            line: 0,
            detail: format!("layer {l} has {} heads, expected {width}", row.len()),
        });
    }
    Ok(scores)
}

// ---------------------------------------------------------------------------
// History CSV
// ---------------------------------------------------------------------------

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy";

pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for e in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.train_loss, e.val_loss, e.val_accuracy
        ));
    }
    out
}

pub fn history_from_csv(text: &str) -> Result<Vec<EpochStats>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == HISTORY_CSV_HEADER => {}
        other => {
            return Err(ReportError::CsvHeader {
                expected: HISTORY_CSV_HEADER,
                found: other.map(|(_, s)| s.to_string()).unwrap_or_default(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(ReportError::CsvParse {
                line: line_no,
                detail: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let epoch: usize = fields[0].trim().parse().map_err(|_| ReportError::CsvParse {
            line: line_no,
            detail: String::from("epoch is not an integer"),
        })?;
        let mut nums = [0.0f64; 3];
        for (slot, (name, field)) in nums.iter_mut().zip(
            ["train_loss", "val_loss", "val_accuracy"]
                .iter()
                .zip(&fields[1..]),
        ) {
            *slot = field.trim().parse().map_err(|_| ReportError::CsvParse {
                line: line_no,
                detail: format!("{name} is not a number"),
            })?;
        }
        out.push(EpochStats {
            epoch,
            train_loss: nums[0],
            val_loss: nums[1],
            val_accuracy: nums[2],
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SVG heatmap
// ---------------------------------------------------------------------------

/// Cell fill mapping. `Log` compresses wide score ranges; scores below the
/// floor clamp to it, and without a floor every score must be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorScale {
    Linear,
    Log { floor: Option<f64> },
}

/// Everything the heatmap renderer reads.
pub struct HeatmapSpec<'a> {
    pub grid: &'a ImportanceGrid,
    /// Print each cell's score, rounded to two decimals, inside the cell.
    pub annotate: bool,
    pub color_scale: ColorScale,
    pub title: &'a str,
}

const CELL: usize = 48;
const MARGIN_LEFT: usize = 64;
const MARGIN_TOP: usize = 56;
const MARGIN_RIGHT: usize = 16;
const MARGIN_BOTTOM: usize = 16;

/// Light end of the ramp (smallest score).
const RAMP_LIGHT: (u8, u8, u8) = (235, 242, 250);
/// Dark end of the ramp (largest score).
const RAMP_DARK: (u8, u8, u8) = (16, 46, 84);

/// Interpolate the single-hue ramp. Monotone in `t` channel by channel, so
/// darker always means a larger score.
pub(crate) fn ramp_color(t: f64) -> (u8, u8, u8) {
    let lerp = |a: u8, b: u8| -> u8 {
        let v = a as f64 + t.clamp(0.0, 1.0) * (b as f64 - a as f64);
        math::round(v) as u8
    };
    (
        lerp(RAMP_LIGHT.0, RAMP_DARK.0),
        lerp(RAMP_LIGHT.1, RAMP_DARK.1),
        lerp(RAMP_LIGHT.2, RAMP_DARK.2),
    )
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Positions of every score on the color ramp, in `[0, 1]`.
fn ramp_positions(spec: &HeatmapSpec<'_>) -> Result<Vec<Vec<f64>>, ReportError> {
    let scores = &spec.grid.scores;
    for (l, row) in scores.iter().enumerate() {
        for (h, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ReportError::BadScore {
                    layer: l,
                    head: h,
                    value: v,
                });
            }
        }
    }
    if let ColorScale::Log { floor } = spec.color_scale {
        match floor {
            Some(fl) if !fl.is_finite() || fl <= 0.0 => {
                return Err(ReportError::BadFloor { value: fl });
            }
            Some(_) => {}
            None => {
                for row in scores {
                    for &v in row {
                        if v <= 0.0 {
                            return Err(ReportError::LogScaleNeedsPositive { value: v });
                        }
                    }
                }
            }
        }
    }
    let apply = |v: f64| -> f64 {
        match spec.color_scale {
            ColorScale::Linear => v,
            ColorScale::Log { floor: Some(fl) } => math::ln(v.max(fl)),
            ColorScale::Log { floor: None } => math::ln(v),
        }
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut transformed = Vec::with_capacity(scores.len());
    for row in scores {
        let mut t_row = Vec::with_capacity(row.len());
        for &v in row {
            let t = apply(v);
            lo = lo.min(t);
            hi = hi.max(t);
            t_row.push(t);
        }
        transformed.push(t_row);
    }
    let span = hi - lo;
    Ok(transformed
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|t| if span > 0.0 { (t - lo) / span } else { 0.5 })
                .collect()
        })
        .collect())
}

/// Render the grid as a standalone SVG 1.1 document. Pure function: identical
/// specs produce identical bytes. Layer 0 is the top row; head 0 the left
/// column; fills run light to dark from the smallest to the largest score.
pub fn render_heatmap(spec: &HeatmapSpec<'_>) -> Result<String, ReportError> {
    let n_layers = spec.grid.n_layers();
    let n_heads = spec.grid.n_heads();
    if n_layers == 0 || n_heads == 0 {
        return Err(ReportError::EmptyGrid);
    }
    let positions = ramp_positions(spec)?;
    let width = MARGIN_LEFT + n_heads * CELL + MARGIN_RIGHT;
    let height = MARGIN_TOP + n_layers * CELL + MARGIN_BOTTOM;
    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" \
         height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<title>{}</title>\n<text x=\"{MARGIN_LEFT}\" y=\"24\" font-family=\"monospace\" \
         font-size=\"14\">{}</text>\n",
        escape_xml(spec.title),
        escape_xml(spec.title)
    ));
    for h in 0..n_heads {
        let x = MARGIN_LEFT + h * CELL + CELL / 2;
        let y = MARGIN_TOP - 8;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">H{h}</text>\n"
        ));
    }
    for l in 0..n_layers {
        let x = MARGIN_LEFT - 8;
        let y = MARGIN_TOP + l * CELL + CELL / 2 + 4;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"end\">L{l}</text>\n"
        ));
    }
    for l in 0..n_layers {
        for h in 0..n_heads {
            let t = positions[l][h];
            let (r, g, b) = ramp_color(t);
            let x = MARGIN_LEFT + h * CELL;
            let y = MARGIN_TOP + l * CELL;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"#{r:02x}{g:02x}{b:02x}\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n"
            ));
            if spec.annotate {
                let tx = x + CELL / 2;
                let ty = y + CELL / 2 + 4;
                let ink = if t > 0.5 { "#ffffff" } else { "#102e54" };
                svg.push_str(&format!(
                    "<text x=\"{tx}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"11\" \
                     text-anchor=\"middle\" fill=\"{ink}\">{:.2}</text>\n",
                    spec.grid.scores[l][h]
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

// ---------------------------------------------------------------------------
// Metric tables
// ---------------------------------------------------------------------------

/// Fixed display order and names for the eight reported metrics.
pub fn metric_rows(report: &EvalReport) -> [(&'static str, f64); 8] {
    [
        ("Precision", report.precision),
        ("Recall", report.recall),
        ("F1-Score", report.f1),
        ("Accuracy", report.accuracy),
        ("Macro Avg Precision", report.macro_precision),
        ("Macro Avg Recall", report.macro_recall),
        ("Weighted Avg Precision", report.weighted_precision),
        ("Weighted Avg Recall", report.weighted_recall),
    ]
}

/// One-model metric table, Markdown, two decimals.
pub fn render_eval_table(report: &EvalReport) -> String {
    let mut out = String::from("| Metric | Score |\n| --- | --- |\n");
    for (name, value) in metric_rows(report) {
        out.push_str(&format!("| {name} | {value:.2} |\n"));
    }
    out
}

/// Original-vs-pruned table, Markdown, two decimals, signed deltas.
pub fn render_comparison_table(cmp: &Comparison) -> String {
    let before = metric_rows(&cmp.original);
    let after = metric_rows(&cmp.pruned);
    let deltas = [
        cmp.deltas.precision,
        cmp.deltas.recall,
        cmp.deltas.f1,
        cmp.deltas.accuracy,
        cmp.deltas.macro_precision,
        cmp.deltas.macro_recall,
        cmp.deltas.weighted_precision,
        cmp.deltas.weighted_recall,
    ];
    let mut out =
        String::from("| Metric | Original | Pruned | Delta |\n| --- | --- | --- | --- |\n");
    for i in 0..8 {
        out.push_str(&format!(
            "| {} | {:.2} | {:.2} | {:+.2} |\n",
            before[i].0, before[i].1, after[i].1, deltas[i]
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

/// Optional sections of a run summary; present sections render in the fixed
/// order configuration, training, importance, pruning, evaluation.
#[derive(Default)]
pub struct RunSummary<'a> {
    pub title: &'a str,
    /// Verbatim configuration echo, normally the JSON the run used.
    pub config_echo: Option<&'a str>,
    pub history: Option<&'a [EpochStats]>,
    pub grid: Option<&'a ImportanceGrid>,
    pub prune_report: Option<&'a PruneReport>,
    pub evaluation: Option<&'a EvalReport>,
    pub comparison: Option<&'a Comparison>,
}

/// Render the summary as Markdown.
pub fn render_run_summary(s: &RunSummary<'_>) -> String {
    let mut out = format!("# {}\n", if s.title.is_empty() { "Run Summary" } else { s.title });
    if let Some(config) = s.config_echo {
        out.push_str("\n## Configuration\n\n```json\n");
        out.push_str(config.trim_end());
        out.push_str("\n```\n");
    }
    if let Some(history) = s.history {
        out.push_str("\n## Training\n\n");
        out.push_str("| Epoch | Train Loss | Val Loss | Val Accuracy |\n");
        out.push_str("| --- | --- | --- | --- |\n");
        for e in history {
            out.push_str(&format!(
                "| {} | {:.4} | {:.4} | {:.4} |\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy
            ));
        }
    }
    if let Some(grid) = s.grid {
        out.push_str("\n## Head Importance\n\n");
        out.push_str(&format!(
            "{} layers x {} heads, scored on {} {} examples ({} reduction).\n",
            grid.n_layers(),
            grid.n_heads(),
            grid.n_examples,
            grid.source_split,
            grid.reduction
        ));
        if let Some((lo, hi)) = grid.score_range() {
            out.push_str(&format!("Scores range from {lo:.6} to {hi:.6}.\n"));
        }
    }
    if let Some(report) = s.prune_report {
        out.push_str("\n## Pruning\n\n");
        out.push_str(&format!(
            "{} heads pruned at threshold {} (epsilon {}); {} of {} heads retained.\n",
            report.pruned_heads.len(),
            report.threshold,
            report.epsilon,
            report.retained_count,
            report.total_count
        ));
        if !report.pruned_heads.is_empty() {
            let cells: Vec<String> = report
                .pruned_heads
                .iter()
                .map(|(l, h)| format!("L{l}H{h}"))
                .collect();
            out.push_str(&format!("Pruned: {}.\n", cells.join(", ")));
        }
    }
    if let Some(report) = s.evaluation {
        out.push_str("\n## Evaluation\n\n");
        out.push_str(&format!(
            "Task: {}, {} examples.\n\n",
            report.task, report.n
        ));
        out.push_str(&render_eval_table(report));
        if !report.zero_denominator.is_empty() {
            out.push_str(&format!(
                "\nZero-denominator metrics reported as 0.00: {}.\n",
                report.zero_denominator.join(", ")
            ));
        }
    }
    if let Some(cmp) = s.comparison {
        out.push_str("\n## Original vs Pruned\n\n");
        out.push_str(&format!(
            "Task: {}, {} examples.\n\n",
            cmp.original.task, cmp.original.n
        ));
        out.push_str(&render_comparison_table(cmp));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;
    use crate::metrics::ConfusionCounts;
    use crate::prune::{MetricDeltas, ScoreReduction, SourceSplit};
    use alloc::vec;

    fn grid(scores: Vec<Vec<f64>>) -> ImportanceGrid {
        ImportanceGrid {
            scores,
            n_examples: 5,
            task: Task::Idiom,
            source_split: SourceSplit::Test,
            reduction: ScoreReduction::Mean,
        }
    }

    #[test]
    fn grid_csv_round_trip_is_byte_identical() {
        let g = grid(vec![
            vec![0.1, 1.0 / 3.0, 1e-17],
            vec![12345.678901234567, 0.0, 2.5e-300],
        ]);
        let csv = grid_to_csv(&g);
        let parsed = grid_scores_from_csv(&csv).unwrap();
        for (row, want) in parsed.iter().zip(&g.scores) {
            for (a, b) in row.iter().zip(want) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let again = grid_to_csv(&grid(parsed));
        assert_eq!(csv, again);
        assert!(csv.starts_with("layer,head,score\n"));
        assert!(csv.contains("0,1,0.3333333333333333\n"));
    }

    #[test]
    fn grid_csv_rejects_malformed_input() {
        assert_eq!(
            grid_scores_from_csv("layer,head\n0,0,1.0\n").unwrap_err(),
            ReportError::CsvHeader {
                expected: GRID_CSV_HEADER,
                found: String::from("layer,head"),
            }
        );
        assert!(matches!(
            grid_scores_from_csv("layer,head,score\n0,0\n").unwrap_err(),
            ReportError::CsvParse { line: 2, .. }
        ));
        assert!(matches!(
            grid_scores_from_csv("layer,head,score\n0,0,abc\n").unwrap_err(),
            ReportError::CsvParse { line: 2, .. }
        ));
        assert!(matches!(
            grid_scores_from_csv("layer,head,score\n0,1,1.0\n").unwrap_err(),
            ReportError::CsvParse { line: 2, .. }
        ));
        assert!(matches!(
            grid_scores_from_csv("layer,head,score\n0,0,1.0\n0,1,2.0\n1,1,3.0\n").unwrap_err(),
            ReportError::CsvParse { line: 4, .. }
        ));
        assert_eq!(
            grid_scores_from_csv("layer,head,score\n").unwrap_err(),
            ReportError::EmptyGrid
        );
        // Ragged: second layer starts before the first reaches width 2.
        assert!(matches!(
            grid_scores_from_csv("layer,head,score\n0,0,1.0\n0,1,2.0\n1,0,3.0\n2,0,4.0\n")
                .unwrap_err(),
            ReportError::CsvParse { .. }
        ));
    }

    #[test]
    fn history_csv_round_trips() {
        let history = vec![
            EpochStats {
                epoch: 1,
                train_loss: 0.6931471805599453,
                val_loss: 0.7,
                val_accuracy: 0.5,
            },
            EpochStats {
                epoch: 2,
                train_loss: 0.25,
                val_loss: 1.0 / 3.0,
                val_accuracy: 0.875,
            },
        ];
        let csv = history_to_csv(&history);
        assert!(csv.starts_with("epoch,train_loss,val_loss,val_accuracy\n"));
        let parsed = history_from_csv(&csv).unwrap();
        assert_eq!(parsed, history);
        assert_eq!(history_to_csv(&parsed), csv);
        assert!(matches!(
            history_from_csv("epoch,train_loss\n").unwrap_err(),
            ReportError::CsvHeader { .. }
        ));
        assert!(matches!(
            history_from_csv("epoch,train_loss,val_loss,val_accuracy\n1,0.5,0.4\n").unwrap_err(),
            ReportError::CsvParse { line: 2, .. }
        ));
    }

    #[test]
    fn heatmap_has_one_cell_per_head_and_full_axes() {
        let scores: Vec<Vec<f64>> = (0..12)
            .map(|l| (0..12).map(|h| (l * 12 + h) as f64 * 0.01).collect())
            .collect();
        let g = grid(scores);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "importance",
        };
        let svg = render_heatmap(&spec).unwrap();
        assert_eq!(svg.matches("<rect ").count(), 144);
        for l in 0..12 {
            assert!(svg.contains(&format!(">L{l}</text>")));
        }
        for h in 0..12 {
            assert!(svg.contains(&format!(">H{h}</text>")));
        }
        assert!(svg.starts_with("<?xml version=\"1.0\""));
        assert!(svg.contains("version=\"1.1\""));
        assert_eq!(render_heatmap(&spec).unwrap(), svg);
    }

    #[test]
    fn annotation_rounds_to_two_decimals() {
        let g = grid(vec![vec![0.3333, 0.666666]]);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: true,
            color_scale: ColorScale::Linear,
            title: "t",
        };
        let svg = render_heatmap(&spec).unwrap();
        assert!(svg.contains(">0.33</text>"));
        assert!(svg.contains(">0.67</text>"));
        let bare = HeatmapSpec {
            annotate: false,
            ..spec
        };
        assert!(!render_heatmap(&bare).unwrap().contains(">0.33</text>"));
    }

    #[test]
    fn constant_grid_uses_the_mid_scale_color() {
        let g = grid(vec![vec![0.4; 3]; 2]);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "flat",
        };
        let svg = render_heatmap(&spec).unwrap();
        let (r, gr, b) = ramp_color(0.5);
        let mid = format!("fill=\"#{r:02x}{gr:02x}{b:02x}\"");
        assert_eq!(svg.matches(mid.as_str()).count(), 6);
    }

    #[test]
    fn darker_cells_are_higher_scores() {
        let values = [0.0, 0.05, 0.2, 0.21, 0.5, 0.9, 1.7];
        let g = grid(vec![values.to_vec()]);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "",
        };
        let svg = render_heatmap(&spec).unwrap();
        // With annotation off, every fill attribute is a cell.
        let mut lums = Vec::new();
        for piece in svg.split("fill=\"#").skip(1) {
            let hex = &piece[..6];
            let lum: u32 = (0..3)
                .map(|i| u32::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap())
                .sum();
            lums.push(lum);
        }
        assert_eq!(lums.len(), values.len());
        // Scores ascend left to right, so luminance must not increase.
        for pair in lums.windows(2) {
            assert!(pair[0] >= pair[1], "ramp not monotone: {lums:?}");
        }
        assert!(lums[0] > lums[6]);
    }

    #[test]
    fn ramp_is_monotone_everywhere() {
        let mut prev = u32::MAX;
        for i in 0..=1000 {
            let (r, g, b) = ramp_color(i as f64 / 1000.0);
            let lum = r as u32 + g as u32 + b as u32;
            assert!(lum <= prev);
            prev = lum;
        }
    }

    #[test]
    fn log_scale_validation_and_clamping() {
        let g = grid(vec![vec![0.0, 1.0]]);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: false,
            color_scale: ColorScale::Log { floor: None },
            title: "",
        };
        assert_eq!(
            render_heatmap(&spec).unwrap_err(),
            ReportError::LogScaleNeedsPositive { value: 0.0 }
        );
        let with_floor = HeatmapSpec {
            color_scale: ColorScale::Log { floor: Some(1e-6) },
            ..spec
        };
        assert!(render_heatmap(&with_floor).unwrap().contains("<rect "));
        let bad_floor = HeatmapSpec {
            color_scale: ColorScale::Log { floor: Some(-1.0) },
            grid: &g,
            annotate: false,
            title: "",
        };
        assert_eq!(
            render_heatmap(&bad_floor).unwrap_err(),
            ReportError::BadFloor { value: -1.0 }
        );
        let nan_grid = grid(vec![vec![f64::NAN]]);
        let nan_spec = HeatmapSpec {
            grid: &nan_grid,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "",
        };
        assert!(matches!(
            render_heatmap(&nan_spec).unwrap_err(),
            ReportError::BadScore {
                layer: 0,
                head: 0,
                ..
            }
        ));
        let empty = grid(vec![]);
        let empty_spec = HeatmapSpec {
            grid: &empty,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "",
        };
        assert_eq!(render_heatmap(&empty_spec).unwrap_err(), ReportError::EmptyGrid);
    }

    #[test]
    fn titles_are_escaped() {
        let g = grid(vec![vec![1.0]]);
        let spec = HeatmapSpec {
            grid: &g,
            annotate: false,
            color_scale: ColorScale::Linear,
            title: "a<b & \"c\"",
        };
        let svg = render_heatmap(&spec).unwrap();
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
        assert!(!svg.contains("a<b"));
    }

    fn fixture_report() -> EvalReport {
        EvalReport {
            precision: 0.87,
            recall: 0.65,
            f1: 0.74,
            accuracy: 0.78,
            macro_precision: 0.79,
            macro_recall: 0.78,
            weighted_precision: 0.79,
            weighted_recall: 0.78,
            counts: ConfusionCounts {
                true_positive: 13,
                false_positive: 2,
                true_negative: 18,
                false_negative: 7,
            },
            task: Task::Metaphor,
            n: 40,
            zero_denominator: vec![],
        }
    }

    #[test]
    fn eval_table_renders_the_pinned_rows_in_order() {
        let table = render_eval_table(&fixture_report());
        let expect = "| Metric | Score |\n\
                      | --- | --- |\n\
                      | Precision | 0.87 |\n\
                      | Recall | 0.65 |\n\
                      | F1-Score | 0.74 |\n\
                      | Accuracy | 0.78 |\n\
                      | Macro Avg Precision | 0.79 |\n\
                      | Macro Avg Recall | 0.78 |\n\
                      | Weighted Avg Precision | 0.79 |\n\
                      | Weighted Avg Recall | 0.78 |\n";
        assert_eq!(table, expect);
    }

    #[test]
    fn comparison_table_shows_identical_columns_for_empty_prune() {
        let r = fixture_report();
        let cmp = Comparison {
            original: r.clone(),
            pruned: r,
            deltas: MetricDeltas {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                accuracy: 0.0,
                macro_precision: 0.0,
                macro_recall: 0.0,
                weighted_precision: 0.0,
                weighted_recall: 0.0,
            },
        };
        let table = render_comparison_table(&cmp);
        assert!(table.contains("| Precision | 0.87 | 0.87 | +0.00 |"));
        assert!(table.contains("| Weighted Avg Recall | 0.78 | 0.78 | +0.00 |"));
        for line in table.lines().skip(2) {
            let cells: Vec<&str> = line.split('|').map(str::trim).collect();
            assert_eq!(cells[2], cells[3], "original and pruned differ: {line}");
        }
    }

    #[test]
    fn run_summary_sections_appear_in_order() {
        let history = vec![EpochStats {
            epoch: 1,
            train_loss: 0.69,
            val_loss: 0.68,
            val_accuracy: 0.55,
        }];
        let g = grid(vec![vec![0.0, 0.25]]);
        let report = PruneReport {
            threshold: 0.0,
            epsilon: 0.0,
            pruned_heads: vec![(0, 0)],
            retained_count: 1,
            total_count: 2,
        };
        let eval = fixture_report();
        let summary = render_run_summary(&RunSummary {
            title: "",
            config_echo: Some("{\n  \"seed\": 7\n}"),
            history: Some(&history),
            grid: Some(&g),
            prune_report: Some(&report),
            evaluation: Some(&eval),
            comparison: None,
        });
        let order = [
            "# Run Summary",
            "## Configuration",
            "## Training",
            "## Head Importance",
            "## Pruning",
            "## Evaluation",
        ];
        let mut last = 0;
        for heading in order {
            let at = summary.find(heading).unwrap_or_else(|| panic!("missing {heading}"));
            assert!(at >= last);
            last = at;
        }
        assert!(summary.contains("1 heads pruned"));
        assert!(summary.contains("1 of 2 heads retained"));
        assert!(summary.contains("Pruned: L0H0."));
        assert!(summary.contains("| 1 | 0.6900 | 0.6800 | 0.5500 |"));

        let empty_prune = PruneReport {
            threshold: 0.0,
            epsilon: 0.0,
            pruned_heads: vec![],
            retained_count: 2,
            total_count: 2,
        };
        let s2 = render_run_summary(&RunSummary {
            title: "Desk Run",
            prune_report: Some(&empty_prune),
            ..Default::default()
        });
        assert!(s2.starts_with("# Desk Run\n"));
        assert!(s2.contains("0 heads pruned"));
        assert!(!s2.contains("Pruned: "));
    }
}
