//! Level sets of an estimate over an `(eps1, eps0)` grid.
//!
//! Contours come from marching squares with linear interpolation along
//! cell edges; ambiguous saddle cells are resolved by the cell-center
//! average. Rendering is plain SVG.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values on a rectangular grid, `values[i][j]` at `(eps1[i], eps0[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub eps1: Vec<f64>,
    pub eps0: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Grid {
    /// Builds a grid from long-format `(eps1, eps0, value)` triples.
    pub fn from_long(rows: &[(f64, f64, f64)]) -> Result<Self> {
        let axis = |f: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let eps1 = axis(|r| r.0);
        let eps0 = axis(|r| r.1);
        if eps1.len() < 2 || eps0.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "contour grid needs at least 2 distinct values per axis, got {} x {}",
                eps1.len(),
                eps0.len()
            )));
        }
        let mut values = vec![vec![f64::NAN; eps0.len()]; eps1.len()];
        let mut seen = vec![vec![false; eps0.len()]; eps1.len()];
        for &(a, b, v) in rows {
            let i = eps1.iter().position(|&x| x == a).unwrap();
            let j = eps0.iter().position(|&x| x == b).unwrap();
            if seen[i][j] {
                return Err(Error::InvalidArgument(format!(
                    "duplicate grid cell ({a}, {b})"
                )));
            }
            seen[i][j] = true;
            values[i][j] = v;
        }
        for (i, row) in seen.iter().enumerate() {
            if let Some(j) = row.iter().position(|s| !s) {
                return Err(Error::InvalidArgument(format!(
                    "grid cell ({}, {}) is missing",
                    eps1[i], eps0[j]
                )));
            }
        }
        Ok(Self { eps1, eps0, values })
    }

    pub fn to_long(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for (i, &a) in self.eps1.iter().enumerate() {
            for (j, &b) in self.eps0.iter().enumerate() {
                out.push((a, b, self.values[i][j]));
            }
        }
        out
    }

    pub fn to_long_csv(&self) -> String {
        let mut s = String::from("eps1,eps0,value\n");
        for (a, b, v) in self.to_long() {
            writeln!(s, "{a},{b},{v}").unwrap();
        }
        s
    }

    fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().flatten().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// A contour piece between two points in `(eps1, eps0)` coordinates.
pub type Segment = [(f64, f64); 2];

fn lerp(a: f64, b: f64, va: f64, vb: f64, level: f64) -> f64 {
    if va == vb {
        (a + b) / 2.0
    } else {
        a + (level - va) / (vb - va) * (b - a)
    }
}

/// Segments of the level set `value = level`.
pub fn marching_squares(grid: &Grid, level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let (xs, ys, v) = (&grid.eps1, &grid.eps0, &grid.values);
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            // corners counter-clockwise from (i, j)
            let c = [v[i][j], v[i + 1][j], v[i + 1][j + 1], v[i][j + 1]];
            if c.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let p = [
                (xs[i], ys[j]),
                (xs[i + 1], ys[j]),
                (xs[i + 1], ys[j + 1]),
                (xs[i], ys[j + 1]),
            ];
            let above: Vec<bool> = c.iter().map(|&x| x >= level).collect();
            let crossing = |k: usize| -> Option<(f64, f64)> {
                let l = (k + 1) % 4;
                if above[k] == above[l] {
                    return None;
                }
                Some((
                    lerp(p[k].0, p[l].0, c[k], c[l], level),
                    lerp(p[k].1, p[l].1, c[k], c[l], level),
                ))
            };
            let pts: Vec<(usize, (f64, f64))> =
                (0..4).filter_map(|k| crossing(k).map(|q| (k, q))).collect();
            match pts.len() {
                2 => out.push([pts[0].1, pts[1].1]),
                4 => {
                    let center = c.iter().sum::<f64>() / 4.0;
                    // when the center sides with corners 0 and 2, corners 1
                    // and 3 are cut off separately, and vice versa
                    if (center >= level) == above[0] {
                        out.push([pts[0].1, pts[1].1]);
                        out.push([pts[2].1, pts[3].1]);
                    } else {
                        out.push([pts[0].1, pts[3].1]);
                        out.push([pts[1].1, pts[2].1]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// `count` evenly spaced levels strictly inside the value range, with 0
/// added when it lies inside. Empty for a constant grid.
pub fn default_levels(grid: &Grid, count: usize) -> Vec<f64> {
    let Some((lo, hi)) = grid.range() else {
        return Vec::new();
    };
    if !(hi > lo) {
        return Vec::new();
    }
    let step = (hi - lo) / (count + 1) as f64;
    let mut levels: Vec<f64> = (1..=count).map(|k| lo + step * k as f64).collect();
    if lo < 0.0 && hi > 0.0 && !levels.contains(&0.0) {
        levels.push(0.0);
        levels.sort_by(f64::total_cmp);
    }
    levels
}

/// A labelled point drawn over the contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub label: String,
    pub eps1: f64,
    pub eps0: f64,
}

const W: f64 = 640.0;
const H: f64 = 520.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 30.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 60.0;

fn fmt_level(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// SVG with `eps1` on the horizontal and `eps0` on the vertical axis.
pub fn render_svg(grid: &Grid, levels: &[f64], overlay: &[OverlayPoint], title: &str) -> String {
    let (x0, x1) = (grid.eps1[0], grid.eps1[grid.eps1.len() - 1]);
    let (y0, y1) = (grid.eps0[0], grid.eps0[grid.eps0.len() - 1]);
    let pw = W - PAD_L - PAD_R;
    let ph = H - PAD_T - PAD_B;
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| PAD_T + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{PAD_L:.1}" y="{PAD_T:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for &x in &grid.eps1 {
        writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"#,
            sx(x),
            PAD_T + ph,
            PAD_T + ph + 5.0,
            PAD_T + ph + 18.0,
            fmt_level(x)
        )
        .unwrap();
    }
    for &y in &grid.eps0 {
        writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#,
            PAD_L - 5.0,
            sy(y),
            PAD_L,
            PAD_L - 8.0,
            sy(y) + 4.0,
            fmt_level(y)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">eps1</text>"#,
        PAD_L + pw / 2.0,
        H - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" transform="rotate(-90 18 {0:.1})">eps0</text>"#,
        PAD_T + ph / 2.0
    )
    .unwrap();

    for &level in levels {
        let segs = marching_squares(grid, level);
        if segs.is_empty() {
            continue;
        }
        let stroke = if level == 0.0 { "red" } else { "steelblue" };
        let mut d = String::new();
        for [a, b] in &segs {
            write!(d, "M{:.2} {:.2}L{:.2} {:.2}", sx(a.0), sy(a.1), sx(b.0), sy(b.1)).unwrap();
        }
        writeln!(
            s,
            r#"<path class="contour" data-level="{}" d="{d}" stroke="{stroke}" fill="none" stroke-width="1.5"/>"#,
            fmt_level(level)
        )
        .unwrap();
        // label at the midpoint of the longest piece
        let longest = segs
            .iter()
            .max_by(|p, q| seg_len(p).total_cmp(&seg_len(q)))
            .unwrap();
        let mx = (longest[0].0 + longest[1].0) / 2.0;
        let my = (longest[0].1 + longest[1].1) / 2.0;
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{stroke}" font-size="11">{}</text>"#,
            sx(mx) + 3.0,
            sy(my) - 3.0,
            fmt_level(level)
        )
        .unwrap();
    }

    for pt in overlay {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            sx(pt.eps1),
            sy(pt.eps0),
            sx(pt.eps1) + 5.0,
            sy(pt.eps0) - 5.0,
            xml_escape(&pt.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn seg_len(s: &Segment) -> f64 {
    ((s[0].0 - s[1].0).powi(2) + (s[0].1 - s[1].1).powi(2)).sqrt()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
