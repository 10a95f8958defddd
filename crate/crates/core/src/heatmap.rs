//! SVG heatmaps of per-candidate attention grids.
//!
//! Each candidate gets an `L`-row by `H`-column grid. Cell colour runs from
//! blue (zero) to red (the largest value over all candidates of the
//! instance). Cells kept by the argmax mask carry a black outline and the
//! `masked` class.

use std::fmt::Write as _;

use crate::mas::MasResult;

const CELL: usize = 14;
const GAP: usize = 40;
const MARGIN: usize = 20;
const LABEL_HEIGHT: usize = 36;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
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

/// Blue-to-red colour for `t` in `[0, 1]`.
pub fn gradient(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let red = (255.0 * t).round() as u8;
    (red, 0, 255 - red)
}

/// Joins WordPiece tokens back into readable text.
fn detokenize(tokens: &[String], indices: &[usize]) -> String {
    let mut out = String::new();
    for &i in indices {
        let Some(tok) = tokens.get(i) else { continue };
        match tok.strip_prefix("##") {
            Some(rest) => out.push_str(rest),
            None => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
    }
    out
}

/// Renders one SVG document with a grid per candidate.
pub fn render_heatmap(result: &MasResult, tokens: &[String]) -> Vec<u8> {
    let m = result.candidate_matrices.len();
    let (layers, heads) = result
        .candidate_matrices
        .first()
        .map_or((0, 0), |c| (c.layers, c.heads));
    let scale = result
        .candidate_matrices
        .iter()
        .map(|c| c.max_value())
        .fold(0.0, f64::max);

    let grid_w = heads * CELL;
    let width = 2 * MARGIN + m * grid_w + m.saturating_sub(1) * GAP;
    let height = 2 * MARGIN + LABEL_HEIGHT + 20 + layers * CELL;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let reference = detokenize(tokens, &result.reference_tokens);
    let title = if reference.is_empty() {
        result.instance_id.clone()
    } else {
        format!("{}: reference \"{}\"", result.instance_id, reference)
    };
    let _ = writeln!(
        s,
        r#"<text class="title" x="{MARGIN}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
        MARGIN,
        escape(&title)
    );

    for (c, matrix) in result.candidate_matrices.iter().enumerate() {
        let x0 = MARGIN + c * (grid_w + GAP);
        let y0 = MARGIN + LABEL_HEIGHT;
        let winner = c == result.decision;
        let name = result
            .candidate_tokens
            .get(c)
            .map(|idx| detokenize(tokens, idx))
            .filter(|n| !n.is_empty())
            .unwrap_or_else(|| format!("candidate {c}"));
        let score = result.scores.get(c).copied().unwrap_or(0.0);
        let label = format!(
            "{}: {:.4}{}",
            name,
            score,
            if winner { " (winner)" } else { "" }
        );

        let _ = writeln!(
            s,
            r#"<g class="candidate" data-candidate="{c}" data-winner="{winner}">"#
        );
        let _ = writeln!(
            s,
            r#"<text class="label{}" x="{x0}" y="{}" font-family="sans-serif" font-size="11"{}>{}</text>"#,
            if winner { " winner" } else { "" },
            y0 - 8,
            if winner { r#" font-weight="bold""# } else { "" },
            escape(&label)
        );
        let mask = result.masks.get(c);
        for layer in 0..layers {
            for head in 0..heads {
                let v = matrix.get(layer, head);
                let t = if scale > 0.0 { v / scale } else { 0.0 };
                let (r, g, b) = gradient(t);
                let masked = mask.is_some_and(|mk| mk.get(layer, head));
                let x = x0 + head * CELL;
                let y = y0 + layer * CELL;
                let _ = write!(
                    s,
                    r#"<rect class="{}" data-layer="{layer}" data-head="{head}" data-value="{v:.6}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({r},{g},{b})""#,
                    if masked { "cell masked" } else { "cell" }
                );
                if masked {
                    s.push_str(r##" stroke="#000000" stroke-width="2""##);
                }
                s.push_str("/>\n");
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}
