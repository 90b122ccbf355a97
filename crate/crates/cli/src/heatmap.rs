use std::fmt::Write as _;

use anyhow::{bail, Result};

use rgf_core::trace::{IEGrid, McnSet};

const CELL: usize = 12;
const LEFT: usize = 64;
const TOP: usize = 36;

fn fill(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(t), fade(t), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Layer-by-position map of mean indirect effects. One rectangle per grid
/// cell; MCN cells carry class `mcn`, other traced cells `cell`, cells
/// never traced `empty`.
pub fn render_heatmap(grid: &IEGrid, mcns: &McnSet) -> Result<String> {
    if grid.populated().next().is_none() {
        bail!("indirect-effect grid has no populated cells");
    }
    let (rows, cols) = (grid.n_layers(), grid.max_len());
    let scale = grid.populated().map(|c| c.2.abs()).fold(0.0, f64::max);
    let width = LEFT + cols * CELL + 16;
    let height = TOP + rows * CELL + 40;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(
        s,
        "<style>.mcn{{stroke:#000;stroke-width:1.5}}.cell{{stroke:#fff;stroke-width:0.5}}.empty{{fill:#eeeeee;stroke:#fff;stroke-width:0.5}}</style>"
    )
    .unwrap();
    writeln!(s, r#"<text x="{LEFT}" y="16">Mean indirect effect by layer and position (MCNs outlined)</text>"#).unwrap();
    let mcn = mcns.lookup();
    for l in 1..=rows {
        let y = TOP + (rows - l) * CELL;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">layer {l}</text>"#, LEFT - 6, y + CELL - 2).unwrap();
        for i in 0..cols {
            let x = LEFT + i * CELL;
            let (class, color) = if grid.count[l - 1][i] == 0 {
                ("empty", None)
            } else if mcn.contains_key(&(l, i)) {
                ("mcn", Some(fill(grid.mean_ie[l - 1][i], scale)))
            } else {
                ("cell", Some(fill(grid.mean_ie[l - 1][i], scale)))
            };
            match color {
                Some(c) => writeln!(
                    s,
                    r#"<rect class="{class}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{c}"/>"#
                ),
                None => writeln!(s, r#"<rect class="{class}" x="{x}" y="{y}" width="{CELL}" height="{CELL}"/>"#),
            }
            .unwrap();
        }
    }
    let axis_y = TOP + rows * CELL + 14;
    for i in (0..cols).step_by(8) {
        writeln!(s, r#"<text x="{}" y="{axis_y}" text-anchor="middle">{i}</text>"#, LEFT + i * CELL + CELL / 2).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">position</text>"#, LEFT + cols * CELL / 2, axis_y + 14).unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rgf_core::trace::Mcn;

    fn grid() -> IEGrid {
        IEGrid {
            mean_ie: vec![vec![0.1, -0.2], vec![0.4, 0.0]],
            count: vec![vec![3, 3], vec![3, 0]],
            n_samples: 3,
            n_skipped: 0,
        }
    }

    #[test]
    fn one_rect_per_cell() {
        let m = McnSet { entries: vec![Mcn { layer: 2, position: 0, mean_ie: 0.4 }], cutoff: 0.4 };
        let svg = render_heatmap(&grid(), &m).unwrap();
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg.matches("class=\"mcn\"").count(), 1);
        assert_eq!(svg.matches("class=\"empty\"").count(), 1);
        assert!(svg.contains("fill=\"#ff0000\""));
        assert_eq!(svg, render_heatmap(&grid(), &m).unwrap());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let mut g = grid();
        g.count = vec![vec![0, 0], vec![0, 0]];
        assert!(render_heatmap(&g, &McnSet { entries: vec![], cutoff: 0.0 }).is_err());
    }

    #[test]
    fn colours() {
        assert_eq!(fill(1.0, 1.0), "#ff0000");
        assert_eq!(fill(-1.0, 1.0), "#0000ff");
        assert_eq!(fill(0.0, 1.0), "#ffffff");
        assert_eq!(fill(0.3, 0.0), "#ffffff");
    }
}
