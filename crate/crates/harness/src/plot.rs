//! Minimal PNG line plots: one polyline per group, axes box, no text.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::table::ResultTable;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;
const MARGIN: f64 = 40.0;
const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

/// What to draw from a table.
#[derive(Clone, Debug)]
pub struct LinePlot {
    pub x: String,
    pub y: String,
    /// Column splitting the rows into separate curves.
    pub group: Option<String>,
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

pub fn render(table: &ResultTable, spec: &LinePlot) -> Result<RgbImage> {
    let xs = table.column(&spec.x)?;
    let ys = table.column(&spec.y)?;
    let groups = match &spec.group {
        Some(g) => table.column(g)?,
        None => vec![0.0; xs.len()],
    };
    let finite = |v: &f64| v.is_finite();
    let (x0, x1) = xs
        .iter()
        .filter(|v| finite(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (y0, y1) = ys
        .iter()
        .filter(|v| finite(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = (WIDTH as f64, HEIGHT as f64);
    let black = Rgb([0, 0, 0]);
    for (a, b) in [
        ((MARGIN, MARGIN), (w - MARGIN, MARGIN)),
        ((w - MARGIN, MARGIN), (w - MARGIN, h - MARGIN)),
        ((w - MARGIN, h - MARGIN), (MARGIN, h - MARGIN)),
        ((MARGIN, h - MARGIN), (MARGIN, MARGIN)),
    ] {
        line(&mut img, a, b, black);
    }
    if !(x0.is_finite() && y0.is_finite()) {
        return Ok(img);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let px = |x: f64, y: f64| {
        (
            MARGIN + (x - x0) / span(x0, x1) * (w - 2.0 * MARGIN),
            h - MARGIN - (y - y0) / span(y0, y1) * (h - 2.0 * MARGIN),
        )
    };
    if y0 < 0.0 && y1 > 0.0 {
        let gray = Rgb([200, 200, 200]);
        line(&mut img, px(x0, 0.0), px(x1, 0.0), gray);
    }
    let mut keys: Vec<f64> = groups.clone();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    for (gi, key) in keys.iter().enumerate() {
        let color = Rgb(PALETTE[gi % PALETTE.len()]);
        let mut pts: Vec<(f64, f64)> = (0..xs.len())
            .filter(|&i| groups[i] == *key && finite(&xs[i]) && finite(&ys[i]))
            .map(|i| (xs[i], ys[i]))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for p in &pts {
            let (cx, cy) = px(p.0, p.1);
            for d in [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0)] {
                line(&mut img, (cx, cy), (cx + 2.0 * d.0, cy + 2.0 * d.1), color);
            }
        }
        for pair in pts.windows(2) {
            line(
                &mut img,
                px(pair[0].0, pair[0].1),
                px(pair[1].0, pair[1].1),
                color,
            );
        }
    }
    Ok(img)
}

pub fn save_plot(table: &ResultTable, spec: &LinePlot, path: &Path) -> Result<()> {
    render(table, spec)?.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_grouped_lines() {
        let mut t = ResultTable::new("demo", &["x", "y", "g"]);
        for i in 0..10 {
            t.push(vec![i as f64, (i * i) as f64, 0.0]).unwrap();
            t.push(vec![i as f64, -(i as f64), 1.0]).unwrap();
        }
        let img = render(
            &t,
            &LinePlot {
                x: "x".into(),
                y: "y".into(),
                group: Some("g".into()),
            },
        )
        .unwrap();
        let colored = img
            .pixels()
            .filter(|p| p.0 == PALETTE[0] || p.0 == PALETTE[1])
            .count();
        assert!(colored > 100);
        let dir = tempfile::tempdir().unwrap();
        save_plot(
            &t,
            &LinePlot {
                x: "x".into(),
                y: "y".into(),
                group: None,
            },
            &dir.path().join("p.png"),
        )
        .unwrap();
    }
}
